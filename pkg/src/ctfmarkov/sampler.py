"""Collapsed Gibbs sampler for the factorized higher-order Markov model.

One sweep updates, in order: grid cluster labels, stick fractions, cluster
kernels, lag mixture weights, lag allocations then the class counts
``k`` (with the mixture weights integrated out), after which the grid and
the weight vectors are re-dimensioned to the new ``k``. A split/merge move
on the top class of each lag closes the sweep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._kernels import sweep_allocations
from ._random import categorical_from_logits, log_dirichlet, log_dirichlet_ragged, logsumexp, make_rng
from .chain import PosteriorChain
from .errors import ConsistencyError, InputError
from .model import (DEFAULT_TENSOR_CAP, Hyperparams, LatentState, evaluate_transitions,
                    log_lag_prior_pmf, materialize_tensor)
from .seqdata import SequenceData

log = logging.getLogger(__name__)

K_MODES = ("exact", "stirling")


@dataclass(frozen=True)
class UTable:
    """Precomputed pieces of the collapsed ``k`` conditional.

    ``log_terms[j, k-1] = log p0_j(k) + sum_r [lgamma(k g_j) - lgamma(k g_j + n_jr)]``
    and ``log_U[j, m] = logsumexp(log_terms[j, m:])``, so for allocations whose
    largest (0-based) class is ``m`` the conditional of ``k_j`` over
    ``m+1..C0`` is ``exp(log_terms[j, m:] - log_U[j, m])``.
    """

    log_terms: np.ndarray
    log_U: np.ndarray


@dataclass
class SweepStats:
    """Sufficient statistics of the current allocations.

    grid_counts : (prod(k), C0)   n_h(y)
    cluster_sizes : (L,)          number of grid points per DP cluster
    cluster_counts : (L, C0)      n*_l(y)
    class_counts : list of (C0, k_j)   n_{j,c}(h)
    """

    grid_counts: np.ndarray
    cluster_sizes: np.ndarray
    cluster_counts: np.ndarray
    class_counts: list


def grid_strides(k) -> np.ndarray:
    k = np.asarray(k, dtype=np.int64)
    s = np.ones_like(k)
    if k.size > 1:
        s[:-1] = np.cumprod(k[::-1])[::-1][1:]
    return s


def grid_index(z: np.ndarray, k) -> np.ndarray:
    """Flat grid index of every column of ``z``."""
    return (z * grid_strides(k)[:, None]).sum(axis=0)


def grid_counts(state: LatentState, data: SequenceData) -> np.ndarray:
    G, C0 = state.grid_size, data.C0
    idx = grid_index(state.z, state.k)
    return np.bincount(idx * C0 + data.response, minlength=G * C0).reshape(G, C0)


def class_counts(z: np.ndarray, w: np.ndarray, k, C0: int) -> list:
    out = []
    for j, kj in enumerate(np.asarray(k)):
        out.append(np.bincount(w[j] * kj + z[j], minlength=C0 * kj).reshape(C0, kj))
    return out


def compute_stats(state: LatentState, data: SequenceData) -> SweepStats:
    gc = grid_counts(state, data)
    L = state.L
    sizes = np.bincount(state.zstar, minlength=L)
    cc = np.zeros((L, data.C0), dtype=np.int64)
    np.add.at(cc, state.zstar, gc)
    return SweepStats(gc, sizes, cc, class_counts(state.z, data.w, state.k, data.C0))


def precompute_u_tables(data: SequenceData, hyper: Hyperparams) -> UTable:
    C0, q = data.C0, data.q
    ks = np.arange(1, C0 + 1, dtype=float)
    terms = np.empty((q, C0))
    for j in range(q):
        g = hyper.gamma[j]
        n = data.n_counts[j].astype(float)
        terms[j] = log_lag_prior_pmf(hyper.phi, j + 1, C0) + np.array(
            [np.sum(gammaln(k * g) - gammaln(k * g + n)) for k in ks])
    logU = np.empty_like(terms)
    for m in range(C0):
        logU[:, m] = logsumexp(terms[:, m:], axis=1)
    return UTable(terms, logU)


def _log_pi_star(V: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logV = np.log(V)
        log1m = np.log1p(-V)
    out = logV.copy()
    out[1:] += np.cumsum(log1m[:-1])
    return out


def step_zstar(state: LatentState, stats: SweepStats, rng) -> np.ndarray:
    """Redraw the DP cluster label of every grid point."""
    with np.errstate(divide="ignore"):
        log_ps = np.log(state.pi_star)
    logits = stats.grid_counts @ state.log_lambda_star.T + log_ps[None, :]
    return categorical_from_logits(logits, rng.random(logits.shape[0]))


def step_sticks(state: LatentState, hyper: Hyperparams, rng):
    """Beta updates of the stick fractions given the grid labels; returns ``(V, pi_star)``."""
    L = state.L
    n = np.bincount(state.zstar, minlength=L).astype(float)
    tail = np.concatenate([np.cumsum(n[::-1])[::-1][1:], [0.0]])
    V = np.ones(L)
    V[:-1] = rng.beta(1.0 + n[:-1], hyper.alpha0 + tail[:-1])
    return V, np.exp(_log_pi_star(V))


def step_lambda(state: LatentState, stats: SweepStats, hyper: Hyperparams, rng):
    """Dirichlet updates of the cluster kernels; returns ``(lambda_star, log_lambda_star)``."""
    log_lam = log_dirichlet(rng, hyper.alpha + stats.cluster_counts)
    return np.exp(log_lam), log_lam


def step_pi(state: LatentState, stats: SweepStats, hyper: Hyperparams, rng):
    """Dirichlet updates of the lag mixture weights; returns ``(pi, log_pi)``."""
    log_pi = log_dirichlet_ragged(rng, [hyper.gamma[j] + stats.class_counts[j] for j in range(state.q)])
    return [np.exp(p) for p in log_pi], log_pi


def _padded_log_pi(state: LatentState) -> np.ndarray:
    C0 = state.C0
    out = np.full((state.q, C0, C0), -np.inf)
    for j, lp in enumerate(state.log_pi):
        out[j, :, :lp.shape[1]] = lp
    return out


def step_z(state: LatentState, data: SequenceData, rng) -> np.ndarray:
    """Sequential scan over ``(j, t)`` of the lag allocations; returns a new ``z``."""
    z = np.array(state.z, dtype=np.int64, copy=True)
    u = rng.random(z.shape)
    idx = grid_index(z, state.k)
    sweep_allocations(z, idx, data.w, np.ascontiguousarray(data.response), _padded_log_pi(state),
                      state.log_lambda_star, state.zstar, grid_strides(state.k), state.k, u)
    return z


def k_conditional_logpmf(j: int, max_z: int, data: SequenceData, hyper: Hyperparams,
                         utables: UTable | None = None, mode: str = "exact") -> np.ndarray:
    """Log conditional of ``k_j`` over ``1..C0`` (``-inf`` below ``max_z``, 1-based)."""
    C0 = data.C0
    if not 1 <= max_z <= C0:
        raise ConsistencyError(f"max allocation {max_z} outside 1..{C0} for lag {j + 1}")
    out = np.full(C0, -np.inf)
    if mode == "exact":
        if utables is None:
            utables = precompute_u_tables(data, hyper)
        out[max_z - 1:] = utables.log_terms[j, max_z - 1:] - utables.log_U[j, max_z - 1]
    elif mode == "stirling":
        n = data.n_counts[j]
        s = np.log(n[n > 0]).sum()
        ks = np.arange(max_z, C0 + 1)
        logits = log_lag_prior_pmf(hyper.phi, j + 1, C0)[max_z - 1:] - ks * hyper.gamma[j] * s
        out[max_z - 1:] = logits - logsumexp(logits)
    else:
        raise InputError(f"unknown k-update mode {mode!r}")
    return out


def exact_k_logits(max_z, utables: UTable) -> np.ndarray:
    """Unnormalized log conditional of every ``k_j`` (rows) given 1-based ``max_z``."""
    max_z = np.asarray(max_z, dtype=np.int64)
    C0 = utables.log_terms.shape[1]
    support = np.arange(C0)[None, :] >= (max_z - 1)[:, None]
    return np.where(support, utables.log_terms, -np.inf)


def step_k(state: LatentState, data: SequenceData, utables: UTable | None, hyper: Hyperparams,
           rng, mode: str = "exact") -> np.ndarray:
    """Draw every ``k_j`` from its collapsed conditional given ``z_j``."""
    q = state.q
    max_z = state.z.max(axis=1) + 1 if state.z.size else np.ones(q, dtype=np.int64)
    u = rng.random(q)
    if mode == "exact" and utables is not None:
        if max_z.max() > data.C0:
            raise ConsistencyError(f"allocations exceed C0 at lags {np.flatnonzero(max_z > data.C0) + 1}")
        logits = exact_k_logits(max_z, utables)
    else:
        logits = np.stack([k_conditional_logpmf(j, int(max_z[j]), data, hyper, utables, mode)
                           for j in range(q)])
    return categorical_from_logits(logits, u).astype(np.int64) + 1


def resize_after_k(state: LatentState, data: SequenceData, hyper: Hyperparams, rng) -> LatentState:
    """Bring ``zstar`` and ``pi`` in line with a freshly drawn ``state.k``.

    The previous class counts are read off the shapes of ``state.pi``.
    Surviving grid points keep their labels, new ones are drawn from
    ``pi_star``; weight vectors of lags whose ``k_j`` changed are drawn from
    their Dirichlet conditional under the new dimension.
    """
    old_k = np.array([p.shape[1] for p in state.pi], dtype=np.int64)
    new_k = state.k
    if np.array_equal(old_k, new_k):
        return state
    q = state.q
    multi = np.indices(tuple(new_k)).reshape(q, -1)
    inside = np.all(multi < old_k[:, None], axis=0)
    old_flat = np.ravel_multi_index(tuple(np.minimum(multi, (old_k - 1)[:, None])), tuple(old_k))
    zstar = state.zstar[old_flat]
    n_new = int((~inside).sum())
    if n_new:
        with np.errstate(divide="ignore"):
            lp = np.log(state.pi_star)
        zstar[~inside] = categorical_from_logits(np.broadcast_to(lp, (n_new, lp.size)), rng.random(n_new))
    state.zstar = zstar
    changed = np.flatnonzero(old_k != new_k)
    for j in changed:
        kj = int(new_k[j])
        counts = np.bincount(data.w[j] * kj + state.z[j], minlength=data.C0 * kj).reshape(data.C0, kj)
        lp = log_dirichlet(rng, hyper.gamma[j] + counts)
        state.log_pi[j] = lp
        state.pi[j] = np.exp(lp)
    return state


def collapsed_loglik(counts: np.ndarray, alpha: float) -> float:
    """``log p(y | allocations)`` with a Dir(alpha) kernel integrated out per cell.

    ``counts`` is the ``(cells, C0)`` table of response counts; empty cells
    contribute nothing.
    """
    counts = np.asarray(counts, dtype=float)
    counts = counts[counts.sum(axis=1) > 0]
    if counts.size == 0:
        return 0.0
    C0 = counts.shape[1]
    per_cell = gammaln(alpha + counts).sum(axis=1) - gammaln(C0 * alpha + counts.sum(axis=1))
    return float(per_cell.sum() - counts.shape[0] * (C0 * gammaln(alpha) - gammaln(C0 * alpha)))


def ktilde(z: np.ndarray) -> np.ndarray:
    """Number of distinct occupied classes in every row of ``z``."""
    return np.array([np.unique(row).size for row in z], dtype=np.int64)


def initial_state(data: SequenceData, hyper: Hyperparams, rng, z=None, k=None) -> LatentState:
    """Starting state from given allocations (defaults: all lags in one class).

    Sticks and kernels are drawn from the prior, weights from their
    conditional given ``z`` and grid labels from ``pi_star``.
    """
    q, C0, L, n = data.q, data.C0, int(hyper.L), data.n
    if z is None:
        z = np.zeros((q, n), dtype=np.int64)
    z = np.asarray(z, dtype=np.int64).copy()
    if k is None:
        k = z.max(axis=1) + 1
    k = np.asarray(k, dtype=np.int64).copy()
    V = np.ones(L)
    V[:-1] = rng.beta(1.0, hyper.alpha0, size=L - 1)
    pi_star = np.exp(_log_pi_star(V))
    log_lam = log_dirichlet(rng, np.full((L, C0), hyper.alpha))
    G = int(np.prod(k))
    with np.errstate(divide="ignore"):
        lps = np.log(pi_star)
    zstar = categorical_from_logits(np.broadcast_to(lps, (G, L)), rng.random(G))
    cc = class_counts(z, data.w, k, C0)
    log_pi = [log_dirichlet(rng, hyper.gamma[j] + cc[j]) for j in range(q)]
    state = LatentState(k=k, z=z, zstar=zstar, lambda_star=np.exp(log_lam), V=V, pi_star=pi_star,
                        pi=[np.exp(p) for p in log_pi], log_lambda_star=log_lam, log_pi=log_pi)
    return state


def sweep(state: LatentState, data: SequenceData, hyper: Hyperparams, utables: UTable | None,
          rng, mode: str = "exact", split_merge: bool = True) -> LatentState:
    """One full sweep, updating ``state`` in place and returning it.

    ``split_merge=False`` drops the class split/merge move and leaves the
    plain Gibbs scan.
    """
    stats = compute_stats(state, data)
    state.zstar = step_zstar(state, stats, rng)
    state.V, state.pi_star = step_sticks(state, hyper, rng)
    stats.cluster_counts = np.zeros_like(stats.cluster_counts)
    np.add.at(stats.cluster_counts, state.zstar, stats.grid_counts)
    state.lambda_star, state.log_lambda_star = step_lambda(state, stats, hyper, rng)
    state.pi, state.log_pi = step_pi(state, stats, hyper, rng)
    state.z = step_z(state, data, rng)
    state.k = step_k(state, data, utables, hyper, rng, mode)
    state = resize_after_k(state, data, hyper, rng)
    return step_split_merge(state, data, hyper, rng) if split_merge else state


def _lag_log_target(j: int, kj: int, zj: np.ndarray, data: SequenceData, hyper: Hyperparams) -> float:
    """``log p0_j(k) + log p(z_j | k)`` with the lag weights integrated out."""
    g = float(hyper.gamma[j])
    counts = np.bincount(data.w[j] * kj + zj, minlength=data.C0 * kj)
    n = data.n_counts[j]
    return float(log_lag_prior_pmf(hyper.phi, j + 1, data.C0)[kj - 1]
                 + np.sum(gammaln(kj * g) - gammaln(kj * g + n))
                 + np.sum(gammaln(g + counts) - gammaln(g)))


def step_split_merge(state: LatentState, data: SequenceData, hyper: Hyperparams, rng) -> LatentState:
    """Metropolis split/merge of the top class of every lag, weights integrated out.

    A merge folds class ``k_j - 1`` into a class ``a`` whose grid labels
    coincide with it, so the likelihood is untouched; a split copies the
    labels of class ``a`` into a new top class and moves each member of
    ``a`` there with probability 1/2. Without this move a lag whose two
    classes share one kernel keeps both occupied indefinitely, since ``z``
    alone never empties a class of hundreds of members.
    """
    C0 = data.C0
    with np.errstate(divide="ignore"):
        log_ps = np.log(state.pi_star)
    for j in range(state.q):
        kj = int(state.k[j])
        up = rng.random() < 0.5
        u_a, u_acc = rng.random(), rng.random()
        if (up and kj == C0) or (not up and kj == 1):
            continue
        grid = state.zstar.reshape(tuple(state.k))
        zj = state.z[j]
        if up:
            a = int(u_a * kj)
            members = np.flatnonzero(zj == a)
            z_new = zj.copy()
            z_new[members[rng.random(members.size) < 0.5]] = kj
            new_slice = np.take(grid, [a], axis=j)
            grid_new = np.concatenate([grid, new_slice], axis=j)
            k_new = kj + 1
            log_a = members.size * np.log(2.0) + log_ps[new_slice].sum()
        else:
            a = int(u_a * (kj - 1))
            top = np.take(grid, kj - 1, axis=j)
            if not np.array_equal(top, np.take(grid, a, axis=j)):
                continue
            z_new = np.where(zj == kj - 1, a, zj)
            grid_new = np.delete(grid, kj - 1, axis=j)
            k_new = kj - 1
            log_a = -np.count_nonzero(z_new == a) * np.log(2.0) - log_ps[top].sum()
        log_a += _lag_log_target(j, k_new, z_new, data, hyper) - _lag_log_target(j, kj, zj, data, hyper)
        if np.log(u_acc) >= log_a:
            continue
        state.z[j] = z_new
        state.k[j] = k_new
        state.zstar = grid_new.reshape(-1)
        counts = np.bincount(data.w[j] * k_new + z_new, minlength=C0 * k_new).reshape(C0, k_new)
        lp = log_dirichlet(rng, hyper.gamma[j] + counts)
        state.log_pi[j] = lp
        state.pi[j] = np.exp(lp)
    return state


def _audit(state: LatentState, it: int) -> None:
    try:
        state.check(atol=1e-10)
    except AssertionError as exc:
        raise ConsistencyError(f"invariant violated after sweep {it}: {exc}; k={state.k.tolist()}") from exc


def run_chain(data: SequenceData, hyper: Hyperparams, init: LatentState, seed=None, *,
              mode: str = "exact", contexts=None, record_tensor: bool = False,
              tensor_cap: int = DEFAULT_TENSOR_CAP, audit: bool = True, callback=None,
              rng=None, split_merge: bool = True) -> PosteriorChain:
    """Run the sampler from ``init`` and collect thinned post-burn-in samples.

    Parameters
    ----------
    contexts : array (N, q), optional
        Contexts at which transition probabilities are stored for every
        kept sample (needed for prediction and posterior means).
    record_tensor : bool
        Also store the full dense transition table per kept sample.
    callback : callable(it, state), optional
        Called after every sweep.
    """
    if mode not in K_MODES:
        raise InputError(f"unknown k-update mode {mode!r}")
    if init.q != data.q or init.C0 != data.C0 or init.z.shape != (data.q, data.n):
        raise InputError("initial state does not match the data dimensions")
    sched = hyper.schedule
    rng = rng if rng is not None else make_rng(seed)
    utables = precompute_u_tables(data, hyper) if mode == "exact" else None
    state = init.copy()
    if contexts is not None:
        contexts = np.atleast_2d(np.asarray(contexts, dtype=np.int64))
    S = sched.n_stored
    q = data.q
    iters = np.empty(S, dtype=np.int64)
    ks = np.empty((S, q), dtype=np.int64)
    kts = np.empty((S, q), dtype=np.int64)
    ll = np.empty(S)
    ncl = np.empty(S, dtype=np.int64)
    snaps = np.empty((S, contexts.shape[0], data.C0)) if contexts is not None else None
    tensors = [] if record_tensor else None
    s = 0
    for it in range(1, sched.n_iter + 1):
        state = sweep(state, data, hyper, utables, rng, mode, split_merge)
        if audit:
            _audit(state, it)
        if callback is not None:
            callback(it, state)
        if it > sched.n_burn and (it - sched.n_burn) % sched.thin == 0:
            iters[s] = it
            ks[s] = state.k
            kts[s] = ktilde(state.z)
            ll[s] = collapsed_loglik(grid_counts(state, data), hyper.alpha)
            ncl[s] = np.unique(state.zstar).size
            if snaps is not None:
                snaps[s] = evaluate_transitions(state, contexts)
            if tensors is not None:
                tensors.append(materialize_tensor(state, tensor_cap).probs)
            s += 1
    return PosteriorChain(iters=iters, k=ks, ktilde=kts, loglik=ll, n_clusters=ncl, schedule=sched,
                          seed=seed, contexts=contexts, snapshots=snaps,
                          tensors=np.array(tensors) if tensors is not None else None,
                          meta={"mode": mode, "final_state": state})
