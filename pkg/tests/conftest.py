import itertools

import numpy as np
import pytest

from ctfmarkov._random import log_dirichlet, make_rng
from ctfmarkov.model import Hyperparams, LatentState, Schedule
from ctfmarkov.seqdata import from_codes


def random_state(rng, C0, q, k=None, n=0, L=6, data=None):
    """A valid latent state with randomly drawn parameters."""
    if k is None:
        k = rng.integers(1, C0 + 1, size=q)
    k = np.asarray(k, dtype=np.int64)
    log_pi = [log_dirichlet(rng, np.ones((C0, kj))) for kj in k]
    log_lam = log_dirichlet(rng, np.ones((L, C0)))
    V = np.ones(L)
    V[:-1] = rng.beta(1.0, 1.0, size=L - 1)
    pi_star = np.concatenate([[V[0]], V[1:] * np.cumprod(1 - V[:-1])])
    n = data.n if data is not None else n
    z = np.stack([rng.integers(kj, size=n) for kj in k]) if n else np.zeros((q, 0), dtype=np.int64)
    zstar = rng.integers(L, size=int(np.prod(k)))
    return LatentState(k=k, z=z, zstar=zstar, lambda_star=np.exp(log_lam), V=V, pi_star=pi_star,
                       pi=[np.exp(p) for p in log_pi], log_lambda_star=log_lam, log_pi=log_pi)


def brute_force_transition(state, context):
    """Explicit loop over every grid point."""
    out = np.zeros(state.C0)
    for h in itertools.product(*[range(kj) for kj in state.k]):
        w = 1.0
        for j, hj in enumerate(h):
            w *= state.pi[j][context[j], hj]
        out += w * state.lambda_star[state.label_at(h)]
    return out


def ascending(x, m):
    """x (x+1) ... (x+m-1)."""
    out = 1.0
    for i in range(int(m)):
        out *= x + i
    return out


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def small_data():
    codes = make_rng(3).integers(3, size=60)
    return from_codes(codes, 3, 3)


@pytest.fixture
def tiny_hyper():
    return Hyperparams.default(3, 3, schedule=Schedule(60, 20, 2), L=8)


def mc_ktilde_one(gamma, phi, j, counts, C0, n_draws, rng, chunk=100_000):
    """Monte Carlo P(all allocations of a lag share one class) under the prior.

    Draws k from exp(-phi j k), each row of weights from Dir(gamma), then
    every allocation literally, and counts draws with one occupied class.
    Returns (estimate, standard error).
    """
    p0 = np.exp(-phi * j * np.arange(1, C0 + 1))
    p0 /= p0.sum()
    hits = 0
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        k = rng.choice(np.arange(1, C0 + 1), size=m, p=p0)
        occupied = np.zeros((m, C0), dtype=bool)
        for n_r in counts:
            if n_r == 0:
                continue
            a = np.full((m, C0), float(gamma))
            logg = np.log(rng.standard_gamma(a + 1.0)) + np.log(rng.random((m, C0))) / a
            logg[np.arange(C0)[None, :] >= k[:, None]] = -np.inf
            w = np.exp(logg - logg.max(axis=1, keepdims=True))
            cum = np.cumsum(w, axis=1)
            u = rng.random((m, int(n_r)))[:, :, None] * cum[:, None, -1:]
            z = np.minimum((cum[:, None, :] <= u).sum(axis=2), C0 - 1)
            occupied[np.arange(m)[:, None], z] = True
        hits += int((occupied.sum(axis=1) == 1).sum())
        done += m
    p = hits / n_draws
    return p, np.sqrt(p * (1 - p) / n_draws)
