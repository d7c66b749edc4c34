"""Joint-distribution ("getting it right") check of the sampler.

Two simulators target the same joint law of parameters and data:

* marginal-conditional: independent forward draws from prior then data;
* successive-conditional: alternate a Gibbs sweep with a fresh draw of the
  data (and lag allocations) given the parameters.

Summary statistics from both must agree in distribution.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from ._random import categorical_from_logits, log_dirichlet, make_rng, spawn
from .inference import batch_means_mcse
from .model import Hyperparams, LatentState, log_lag_prior_pmf
from .sampler import _log_pi_star, class_counts, ktilde, precompute_u_tables, sweep
from .seqdata import from_codes


def draw_parameters(C0: int, q: int, hyper: Hyperparams, rng) -> dict:
    """Forward draw of ``k``, weights, sticks, kernels and grid labels."""
    L = int(hyper.L)
    k = np.array([categorical_from_logits(log_lag_prior_pmf(hyper.phi, j + 1, C0), rng.random()) + 1
                  for j in range(q)], dtype=np.int64)
    log_pi = [log_dirichlet(rng, np.full((C0, int(k[j])), hyper.gamma[j])) for j in range(q)]
    V = np.ones(L)
    V[:-1] = rng.beta(1.0, hyper.alpha0, size=L - 1)
    log_ps = _log_pi_star(V)
    log_lam = log_dirichlet(rng, np.full((L, C0), hyper.alpha))
    G = int(np.prod(k))
    zstar = categorical_from_logits(np.broadcast_to(log_ps, (G, L)), rng.random(G))
    return dict(k=k, log_pi=log_pi, V=V, pi_star=np.exp(log_ps), log_lam=log_lam, zstar=zstar)


def draw_data(params: dict, C0: int, q: int, T: int, rng):
    """Ancestral draw of ``(y, z)`` given parameters; the first ``q`` symbols are uniform."""
    k, zstar = params["k"], params["zstar"]
    pi = [np.exp(lp) for lp in params["log_pi"]]
    lam = np.exp(params["log_lam"])
    strides = np.ones(q, dtype=np.int64)
    if q > 1:
        strides[:-1] = np.cumprod(k[::-1])[::-1][1:]
    y = np.empty(T, dtype=np.int64)
    y[:q] = rng.integers(C0, size=q)
    z = np.empty((q, T - q), dtype=np.int64)
    for t in range(q, T):
        idx = 0
        for j in range(q):
            p = pi[j][y[t - j - 1]]
            h = min(int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right")), p.size - 1)
            z[j, t - q] = h
            idx += h * strides[j]
        row = lam[zstar[idx]]
        y[t] = min(int(np.searchsorted(np.cumsum(row), rng.random() * row.sum(), side="right")), C0 - 1)
    return y, z


def _stats(k, z, lam_first) -> np.ndarray:
    return np.concatenate([k, ktilde(z), [lam_first]]).astype(float)


def stat_names(q: int) -> list:
    return [f"k{j + 1}" for j in range(q)] + [f"ktilde{j + 1}" for j in range(q)] + ["lambda1(1)"]


def marginal_conditional(C0: int, q: int, T: int, hyper: Hyperparams, n: int, rng) -> np.ndarray:
    out = np.empty((n, 2 * q + 1))
    for i in range(n):
        par = draw_parameters(C0, q, hyper, rng)
        _, z = draw_data(par, C0, q, T, rng)
        out[i] = _stats(par["k"], z, np.exp(par["log_lam"][0, 0]))
    return out


def successive_conditional(C0: int, q: int, T: int, hyper: Hyperparams, n: int, rng,
                           mode: str = "exact") -> np.ndarray:
    par = draw_parameters(C0, q, hyper, rng)
    y, z = draw_data(par, C0, q, T, rng)
    state = LatentState(k=par["k"], z=z, zstar=par["zstar"], lambda_star=np.exp(par["log_lam"]),
                        V=par["V"], pi_star=par["pi_star"], pi=[np.exp(p) for p in par["log_pi"]],
                        log_lambda_star=par["log_lam"], log_pi=par["log_pi"])
    out = np.empty((n, 2 * q + 1))
    for i in range(n):
        data = from_codes(y, C0, q)
        state = sweep(state, data, hyper, precompute_u_tables(data, hyper), rng, mode)
        # weights are marginalised in the k update; refresh them before they are used
        cc = class_counts(state.z, data.w, state.k, C0)
        state.log_pi = [log_dirichlet(rng, hyper.gamma[j] + cc[j]) for j in range(q)]
        state.pi = [np.exp(p) for p in state.log_pi]
        out[i] = _stats(state.k, state.z, state.lambda_star[0, 0])
        par = dict(k=state.k, zstar=state.zstar, log_pi=state.log_pi, log_lam=state.log_lambda_star)
        y, state.z = draw_data(par, C0, q, T, rng)
    return out


def geweke_test(C0: int = 2, q: int = 2, T: int = 30, L: int = 5, n_samples: int = 10_000,
                seed=0, batch_len: int = 200, hyper: Hyperparams | None = None,
                mode: str = "exact") -> dict:
    """Compare statistic means between the two simulators.

    Returns ``{name: {"mc", "sc", "z", "p"}}``; the standard error of the
    successive-conditional mean uses batch means.
    """
    if hyper is None:
        hyper = Hyperparams.default(C0, q, L=L)
    r_mc, r_sc = spawn(make_rng(seed), 2)
    mc = marginal_conditional(C0, q, T, hyper, n_samples, r_mc)
    sc = successive_conditional(C0, q, T, hyper, n_samples, r_sc, mode)
    out = {}
    for i, name in enumerate(stat_names(q)):
        se_mc = mc[:, i].std(ddof=1) / np.sqrt(n_samples)
        se_sc = batch_means_mcse(sc[:, i], batch_len)
        se = np.hypot(se_mc, se_sc)
        zval = 0.0 if se == 0 else (mc[:, i].mean() - sc[:, i].mean()) / se
        out[name] = {"mc": float(mc[:, i].mean()), "sc": float(sc[:, i].mean()),
                     "z": float(zval), "p": float(2 * stats.norm.sf(abs(zval)))}
    return out
