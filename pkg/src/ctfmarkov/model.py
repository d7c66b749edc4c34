"""Model types and pure functions of the factorized transition model.

Conventions: categories, latent classes and DP cluster labels are 0-based.
A context is an integer vector ``ctx`` of length ``q`` with ``ctx[j]`` the
value of lag ``j+1``. The grid of latent class combinations ``(h_1..h_q)``
is flattened in C order (lag 1 varies slowest).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from ._random import logsumexp
from .errors import DimensionError, InputError, SizeError

DEFAULT_TENSOR_CAP = 4 ** 10


@dataclass(frozen=True)
class Schedule:
    n_iter: int = 50_000
    n_burn: int = 10_000
    thin: int = 5

    def __post_init__(self):
        if self.n_iter < 1 or not (0 <= self.n_burn < self.n_iter) or self.thin < 1:
            raise InputError(f"invalid schedule {self}: need 0 <= n_burn < n_iter and thin >= 1")

    @property
    def n_stored(self) -> int:
        return len(range(self.n_burn + self.thin, self.n_iter + 1, self.thin))

    @classmethod
    def desk(cls) -> "Schedule":
        return cls(10_000, 2_000, 5)

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        parts = [int(p) for p in str(text).split(",")]
        if len(parts) != 3:
            raise InputError(f"schedule must be 'n_iter,n_burn,thin', got {text!r}")
        return cls(*parts)


@dataclass(frozen=True)
class Hyperparams:
    """Fixed prior constants and the sweep schedule.

    ``gamma`` holds one Dirichlet concentration per lag. Use
    :meth:`default` for the recommended settings.
    """

    alpha: float
    alpha0: float
    gamma: np.ndarray
    phi: float = 0.5
    L: int = 100
    schedule: Schedule = field(default_factory=Schedule)

    def __post_init__(self):
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        if self.alpha <= 0 or self.alpha0 <= 0 or self.phi <= 0 or np.any(gamma <= 0):
            raise InputError("all concentrations and phi must be strictly positive")
        if int(self.L) < 2:
            raise InputError("truncation level L must be at least 2")

    @property
    def q(self) -> int:
        return int(self.gamma.size)

    @classmethod
    def default(cls, C0: int, q: int, schedule: Schedule | None = None, **overrides) -> "Hyperparams":
        kw = dict(alpha=1.0 / C0, alpha0=1.0, gamma=np.full(q, 1.0 / C0), phi=0.5, L=100,
                  schedule=schedule or Schedule())
        kw.update(overrides)
        if np.ndim(kw["gamma"]) == 0:
            kw["gamma"] = np.full(q, float(kw["gamma"]))
        return cls(**kw)

    def with_schedule(self, schedule: Schedule) -> "Hyperparams":
        return replace(self, schedule=schedule)


@dataclass
class LatentState:
    """One configuration of the sampler.

    Attributes
    ----------
    k : (q,) int
        Number of latent classes per lag.
    z : (q, n) int
        Lag allocations, ``z[j, i] < k[j]``.
    zstar : (prod(k),) int
        DP cluster label of every grid point, flattened in C order.
    lambda_star : (L, C0) float
        Cluster kernels.
    V, pi_star : (L,) float
        Stick fractions (``V[-1] == 1``) and the induced weights.
    pi : list of (C0, k_j) float
        ``pi[j][c, h]`` is the probability that lag ``j+1`` with value ``c``
        is allocated to class ``h``.
    """

    k: np.ndarray
    z: np.ndarray
    zstar: np.ndarray
    lambda_star: np.ndarray
    V: np.ndarray
    pi_star: np.ndarray
    pi: list
    log_lambda_star: np.ndarray = None
    log_pi: list = None

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=np.int64)
        if self.log_lambda_star is None:
            with np.errstate(divide="ignore"):
                self.log_lambda_star = np.log(self.lambda_star)
        if self.log_pi is None:
            with np.errstate(divide="ignore"):
                self.log_pi = [np.log(p) for p in self.pi]

    @property
    def q(self) -> int:
        return int(self.k.size)

    @property
    def C0(self) -> int:
        return int(self.lambda_star.shape[1])

    @property
    def L(self) -> int:
        return int(self.lambda_star.shape[0])

    @property
    def grid_size(self) -> int:
        return int(np.prod(self.k))

    def label_at(self, h) -> int:
        """Cluster label of grid point ``h = (h_1, .., h_q)``."""
        return int(self.zstar[np.ravel_multi_index(tuple(h), tuple(self.k))])

    def copy(self) -> "LatentState":
        return LatentState(
            k=self.k.copy(), z=self.z.copy(), zstar=self.zstar.copy(),
            lambda_star=self.lambda_star.copy(), V=self.V.copy(), pi_star=self.pi_star.copy(),
            pi=[p.copy() for p in self.pi], log_lambda_star=self.log_lambda_star.copy(),
            log_pi=[p.copy() for p in self.log_pi],
        )

    def check(self, atol: float = 1e-12) -> None:
        """Raise ``AssertionError`` if a structural invariant fails."""
        q, C0 = self.q, self.C0
        assert self.z.shape[0] == q
        assert np.all(self.k >= 1) and np.all(self.k <= C0)
        if self.z.size:
            assert np.all(self.z.max(axis=1) < self.k), "k_j < max z_j + 1"
            assert self.z.min() >= 0
        assert self.zstar.shape == (self.grid_size,)
        assert self.zstar.min() >= 0 and self.zstar.max() < self.L
        assert np.abs(self.lambda_star.sum(axis=1) - 1.0).max() <= atol, "kernel normalization"
        assert abs(self.pi_star.sum() - 1.0) <= atol, "stick weight normalization"
        assert self.V[-1] == 1.0
        for j, p in enumerate(self.pi):
            assert p.shape == (C0, self.k[j])
            assert np.abs(p.sum(axis=1) - 1.0).max() <= atol, f"weight normalization at lag {j + 1}"


@dataclass(frozen=True)
class TransitionTensor:
    """Dense conditional probability table.

    ``probs[r]`` is the distribution of the next symbol for the ``r``-th
    context in lexicographic order over the lags in ``lags`` (first lag
    slowest).
    """

    probs: np.ndarray
    C0: int
    lags: tuple

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "lags", tuple(int(l) for l in self.lags))
        if probs.shape != (self.C0 ** len(self.lags), self.C0):
            raise DimensionError(f"probs has shape {probs.shape}, expected {(self.C0 ** len(self.lags), self.C0)}")
        object.__setattr__(self, "probs", probs)

    @property
    def q(self) -> int:
        return max(self.lags) if self.lags else 0

    def contexts(self) -> np.ndarray:
        """All contexts over ``lags`` in row order, shape ``(rows, len(lags))``."""
        return np.array(list(itertools.product(range(self.C0), repeat=len(self.lags))),
                        dtype=np.int64).reshape(-1, len(self.lags))

    def row_index(self, contexts) -> np.ndarray:
        """Row numbers for full contexts (columns are lags ``1..q'`` with ``q' >= max(lags)``)."""
        contexts = np.atleast_2d(np.asarray(contexts, dtype=np.int64))
        if not self.lags:
            return np.zeros(contexts.shape[0], dtype=np.int64)
        if contexts.shape[1] < self.q:
            raise DimensionError(f"contexts have {contexts.shape[1]} lags, tensor needs {self.q}")
        cols = contexts[:, [l - 1 for l in self.lags]]
        return np.ravel_multi_index(cols.T, (self.C0,) * len(self.lags))

    def rows(self, contexts) -> np.ndarray:
        return self.probs[self.row_index(contexts)]

    def to_csv(self, path) -> None:
        header = [f"lag{l}" for l in self.lags] + [f"p{c}" for c in range(self.C0)]
        ctx = self.contexts()
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for c, p in zip(ctx, self.probs):
                fh.write(",".join([str(v) for v in c] + [repr(float(v)) for v in p]) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TransitionTensor":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        lags = tuple(int(h[3:]) for h in header if h.startswith("lag"))
        C0 = sum(h.startswith("p") for h in header)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, len(lags):], C0, lags)

    def to_json(self) -> str:
        return json.dumps({
            "C0": self.C0, "lags": list(self.lags),
            "rows": [{"context": [int(v) for v in c], "probs": [float(v) for v in p]}
                     for c, p in zip(self.contexts(), self.probs)],
        })

    @classmethod
    def from_json(cls, text: str) -> "TransitionTensor":
        doc = json.loads(text)
        probs = np.array([r["probs"] for r in doc["rows"]], dtype=float)
        return cls(probs, int(doc["C0"]), tuple(doc["lags"]))

    def save(self, path) -> None:
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(self.to_json())
        else:
            self.to_csv(path)


def _grid_weights(state: LatentState, contexts: np.ndarray) -> np.ndarray:
    """Mixture weights over the flattened grid, shape ``(N, prod(k))``."""
    W = np.ones((contexts.shape[0], 1))
    for j in range(state.q):
        if state.k[j] == 1:
            continue
        pj = state.pi[j][contexts[:, j]]
        W = (W[:, :, None] * pj[:, None, :]).reshape(W.shape[0], -1)
    return W


def evaluate_transitions(state: LatentState, contexts, chunk: int = 1 << 22) -> np.ndarray:
    """``p(y | ctx)`` for many contexts at once, shape ``(N, C0)``."""
    contexts = np.atleast_2d(np.asarray(contexts, dtype=np.int64))
    if contexts.shape[1] != state.q:
        raise DimensionError(f"context length {contexts.shape[1]} != q={state.q}")
    kernels = state.lambda_star[state.zstar]
    step = max(1, chunk // max(1, state.grid_size))
    out = np.empty((contexts.shape[0], state.C0))
    for s in range(0, contexts.shape[0], step):
        out[s:s + step] = _grid_weights(state, contexts[s:s + step]) @ kernels
    return out


def evaluate_transition(state: LatentState, context) -> np.ndarray:
    """Transition probabilities for a single context of length ``q``."""
    context = np.asarray(context, dtype=np.int64)
    if context.ndim != 1 or context.size != state.q:
        raise DimensionError(f"context length {context.size} != q={state.q}")
    return evaluate_transitions(state, context[None, :])[0]


def materialize_tensor(state: LatentState, cap: int = DEFAULT_TENSOR_CAP) -> TransitionTensor:
    rows = state.C0 ** state.q
    if rows > cap:
        raise SizeError(f"C0^q = {rows} rows exceeds cap {cap}")
    lags = tuple(range(1, state.q + 1))
    ctx = np.array(list(itertools.product(range(state.C0), repeat=state.q)), dtype=np.int64)
    return TransitionTensor(evaluate_transitions(state, ctx), state.C0, lags)


def parameter_count(k, C0: int) -> int:
    k = np.asarray(k, dtype=np.int64)
    return int((C0 - 1) * np.prod(k) + C0 * np.sum(k - 1))


def log_lag_prior_pmf(phi: float, j: int, C0: int) -> np.ndarray:
    logits = -phi * j * np.arange(1, C0 + 1)
    return logits - logsumexp(logits)


def lag_prior_pmf(phi: float, j: int, C0: int) -> np.ndarray:
    """Prior on the number of classes of lag ``j`` (1-based), over ``k = 1..C0``."""
    return np.exp(log_lag_prior_pmf(phi, j, C0))


def _as_rows(obj, contexts) -> np.ndarray:
    if isinstance(obj, TransitionTensor):
        return obj.rows(contexts)
    return np.atleast_2d(np.asarray(obj, dtype=float))


def l1_distance(P, P0) -> float:
    a = P.probs if isinstance(P, TransitionTensor) else np.asarray(P, dtype=float)
    b = P0.probs if isinstance(P0, TransitionTensor) else np.asarray(P0, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def average_l1_error(estimate, P0, test_contexts) -> float:
    """Mean per-context L1 error divided by ``C0``.

    ``estimate`` and ``P0`` are either tensors (looked up at
    ``test_contexts``) or arrays of per-context rows aligned with them.
    """
    test_contexts = np.asarray(test_contexts, dtype=np.int64)
    if test_contexts.size == 0:
        raise InputError("empty test set")
    test_contexts = np.atleast_2d(test_contexts)
    N = test_contexts.shape[0]
    est = _as_rows(estimate, test_contexts)
    tru = _as_rows(P0, test_contexts)
    if est.shape != tru.shape or est.shape[0] != N:
        raise DimensionError(f"estimate rows {est.shape} do not match truth {tru.shape} for {N} contexts")
    return float(np.abs(tru - est).sum() / (est.shape[1] * N))


def ktilde_prior_prob_one(gamma_j: float, phi: float, j: int, counts, C0: int,
                          mode: str = "exact") -> float:
    """Prior probability that all allocations of lag ``j`` share one class.

    ``counts[r]`` is the number of times category ``r`` appears at lag
    ``j``. The value is the closed form obtained by integrating the mixture
    weights out of the allocation prior; ``mode="stirling"`` replaces the
    Gamma ratios with ``n**a`` for nonzero counts.
    """
    counts = np.asarray(counts, dtype=float)
    g = float(gamma_j)
    ks = np.arange(1, C0 + 1, dtype=float)
    logp0 = log_lag_prior_pmf(phi, j, C0)
    pos = counts > 0
    n = counts[pos]
    if mode == "exact":
        num = np.sum(gammaln(g + n) - gammaln(g))
        den = np.array([np.sum(gammaln(k * g + n) - gammaln(k * g)) for k in ks])
        terms = logp0 + np.log(ks) + num - den
    elif mode == "stirling":
        logn = np.log(n).sum()
        terms = logp0 + np.log(ks) + np.array(
            [(1 - k) * g * logn + n.size * (gammaln(k * g) - gammaln(g)) for k in ks])
    else:
        raise InputError(f"unknown mode {mode!r}")
    return float(np.exp(logsumexp(terms)))
