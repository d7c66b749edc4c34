"""Synthetic ground truth, chain simulation and the simulation-study harness."""

from __future__ import annotations

import csv
import itertools
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._random import make_rng, spawn
from .errors import InputError
from .inference import (lag_inclusion, posterior_mean_transition, posterior_prob,
                        predict_one_step)
from .init_approx import init_two_stage
from .model import DEFAULT_TENSOR_CAP, Hyperparams, Schedule, TransitionTensor, average_l1_error
from .sampler import initial_state, run_chain
from .seqdata import SequenceData, from_codes

# label -> (C0, important lags)
CASES = {
    "A": (4, (1, 2, 3)),
    "B": (3, (1, 2, 3)),
    "C": (4, (1, 2, 4)),
    "D": (3, (1, 2, 4)),
    "E": (4, (1, 3, 5)),
    "F": (3, (1, 3, 5)),
    "G": (3, (1, 4, 8)),
    "H": (2, (1, 4, 8)),
}


def squash(u):
    """``u^2 / (u^2 + (1-u)^2)``, the map used to draw category probabilities."""
    u = np.asarray(u, dtype=float)
    return u ** 2 / (u ** 2 + (1.0 - u) ** 2)


@dataclass(frozen=True)
class TrueProcess:
    """Ground-truth transition law depending only on ``lags``.

    ``tensor`` is indexed by the important lags; ``q`` (two beyond the
    furthest important lag by default) is the maximal order used for
    fitting and for lifted lookups.
    """

    C0: int
    lags: tuple
    q: int
    tensor: TransitionTensor

    def rows(self, contexts) -> np.ndarray:
        """Transition rows for full contexts of length ``>= max(lags)``."""
        return self.tensor.rows(contexts)

    def lifted(self, cap: int = DEFAULT_TENSOR_CAP) -> TransitionTensor:
        n = self.C0 ** self.q
        if n > cap:
            raise InputError(f"lifted tensor has {n} rows, cap is {cap}")
        ctx = np.array(list(itertools.product(range(self.C0), repeat=self.q)), dtype=np.int64)
        return TransitionTensor(self.rows(ctx), self.C0, tuple(range(1, self.q + 1)))


def default_q(lags) -> int:
    """Two beyond the furthest important lag."""
    return (max(lags) if lags else 0) + 2


def random_row(C0: int, rng) -> np.ndarray:
    p = np.empty(C0)
    rest = 1.0
    for c in range(C0 - 1):
        p[c] = squash(rng.random()) * rest
        rest -= p[c]
    p[C0 - 1] = rest
    return p


def generate_true_tensor(C0: int, lag_set, rng, q: int | None = None) -> TrueProcess:
    """Random truth over ``lag_set``; an empty set gives an order-0 (iid) process."""
    lags = tuple(sorted(int(l) for l in lag_set))
    if len(set(lags)) != len(lags) or (lags and lags[0] < 1):
        raise InputError(f"lag set must hold distinct positive integers, got {lag_set}")
    rng = make_rng(rng)
    rows = np.array([random_row(C0, rng) for _ in range(C0 ** len(lags))])
    q = default_q(lags) if q is None else int(q)
    return TrueProcess(C0, lags, q, TransitionTensor(rows, C0, lags))


def simulate_chain(proc: TrueProcess, n_total: int, rng, warmup: int = 200) -> np.ndarray:
    """Simulate ``n_total`` symbols after a discarded warm-up.

    The first ``q`` symbols of the warm-up are drawn uniformly.
    """
    rng = make_rng(rng)
    q, C0 = proc.q, proc.C0
    if n_total <= q:
        raise InputError(f"n_total={n_total} must exceed q={q}")
    total = q + warmup + n_total
    y = np.empty(total, dtype=np.int64)
    y[:q] = rng.integers(C0, size=q)
    lag_idx = np.array(proc.lags, dtype=np.int64) - 1
    strides = C0 ** np.arange(len(proc.lags) - 1, -1, -1)
    cum = np.cumsum(proc.tensor.probs, axis=1)
    u = rng.random(total)
    for t in range(q, total):
        r = int((y[t - 1 - lag_idx] * strides).sum())
        c = int(np.searchsorted(cum[r], u[t] * cum[r, -1], side="right"))
        y[t] = min(c, C0 - 1)
    return y[q + warmup:]


def lag_contexts(y, q: int, start: int, stop: int | None = None) -> np.ndarray:
    """Contexts ``(y[t-1], .., y[t-q])`` for ``t`` in ``start..stop-1``."""
    y = np.asarray(y, dtype=np.int64)
    stop = y.size if stop is None else stop
    t = np.arange(start, stop)
    if t.size and t[0] < q:
        raise InputError("start must be at least q")
    return np.stack([y[t - j] for j in range(1, q + 1)], axis=1)


def mle_oracle(data: SequenceData, lag_set, smoothing: float = 0.5) -> TransitionTensor:
    """Smoothed empirical transition table over the contexts of ``lag_set``."""
    lags = tuple(sorted(int(l) for l in lag_set))
    if lags and (lags[0] < 1 or lags[-1] > data.q):
        raise InputError(f"lags {lags} outside 1..{data.q}")
    C0 = data.C0
    if lags:
        rows = np.ravel_multi_index(tuple(data.w[l - 1] for l in lags), (C0,) * len(lags))
    else:
        rows = np.zeros(data.n, dtype=np.int64)
    R = C0 ** len(lags)
    counts = np.bincount(rows * C0 + data.response, minlength=R * C0).reshape(R, C0).astype(float)
    tot = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = (counts + smoothing) / (tot + C0 * smoothing)
    probs[tot[:, 0] == 0] = 1.0 / C0
    return TransitionTensor(probs, C0, lags)


def parse_case(case) -> tuple:
    """``"G"`` or ``"3:1,4,8"`` / ``(3, (1, 4, 8))`` -> ``(label, C0, lags)``."""
    if isinstance(case, str) and case.upper() in CASES:
        C0, lags = CASES[case.upper()]
        return case.upper(), C0, lags
    if isinstance(case, str) and ":" in case:
        c0, lags = case.split(":", 1)
        try:
            lags = tuple(int(v) for v in lags.split(",") if v.strip())
            c0 = int(c0)
        except ValueError:
            raise InputError(f"cannot parse case {case!r}; expected 'C0:lag,lag,..'") from None
        return case, int(c0), lags
    if isinstance(case, (tuple, list)) and len(case) == 2:
        return f"{case[0]}:{','.join(map(str, case[1]))}", int(case[0]), tuple(case[1])
    raise InputError(f"unknown case {case!r}; valid cases are {', '.join(CASES)} or 'C0:lag,lag,..'")


@dataclass
class ExperimentResult:
    rows: list
    replicates: list = field(default_factory=list)

    def aggregate(self) -> dict:
        out = {}
        for method in sorted({r["method"] for r in self.rows}):
            sub = [r for r in self.rows if r["method"] == method]
            agg = {}
            for key in ("avg_l1", "class_err"):
                v = np.array([r[key] for r in sub])
                agg[key] = {"mean": float(v.mean()),
                            "se": float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0}
            agg["n"] = len(sub)
            out[method] = agg
        return out

    def to_csv(self, path, timings: bool = True) -> None:
        """Write the per-replicate table; ``timings=False`` leaves ``wall_secs`` blank."""
        cols = ["case", "T", "rep", "seed", "method", "avg_l1", "class_err", "wall_secs"]
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
            wr.writeheader()
            for r in self.rows:
                wr.writerow(r if timings else {**r, "wall_secs": ""})

    def aggregate_json(self) -> str:
        return json.dumps(self.aggregate(), indent=2, sort_keys=True)


def fit(data: SequenceData, hyper: Hyperparams, seed=None, *, contexts=None, mode="exact",
        init_iters: int = 100, record_tensor: bool = False, rng=None):
    """Two-stage initialization followed by the collapsed sampler."""
    rng = rng if rng is not None else make_rng(seed)
    r_init, r_state, r_chain = spawn(rng, 3)
    if init_iters > 0:
        z0, k0 = init_two_stage(data, hyper, n_iter=init_iters, rng=r_init)
    else:
        z0, k0 = None, None
    init = initial_state(data, hyper, r_state, z=z0, k=k0)
    return run_chain(data, hyper, init, seed, mode=mode, contexts=contexts,
                     record_tensor=record_tensor, rng=r_chain)


def _replicate(rep: int, rep_seed: int, label: str, C0: int, lags: tuple, q: int, T: int, N: int,
               hyper: Hyperparams, mode: str, hypotheses, keep_chains: bool):
    r_truth, r_sim, r_fit = spawn(make_rng(rep_seed), 3)
    proc = generate_true_tensor(C0, lags, r_truth, q=q)
    y = simulate_chain(proc, T + N, r_sim)
    data = from_codes(y[:T], C0, q)
    test_ctx = lag_contexts(y, q, T, T + N)
    truth_rows = proc.rows(test_ctx)
    y_test = y[T:T + N]

    t0 = time.perf_counter()
    chain = fit(data, hyper, rep_seed, contexts=test_ctx, mode=mode, rng=r_fit)
    est = posterior_mean_transition(chain, test_ctx)
    wall = time.perf_counter() - t0
    base = {"case": label, "T": T, "rep": rep, "seed": rep_seed}
    rows = [{**base, "method": "ctf", "avg_l1": average_l1_error(est, truth_rows, test_ctx),
             "class_err": float(np.mean(predict_one_step(est) != y_test)), "wall_secs": round(wall, 3)}]

    t0 = time.perf_counter()
    o_rows = mle_oracle(data, range(1, q + 1)).rows(test_ctx)
    wall = time.perf_counter() - t0
    rows.append({**base, "method": "mle_full", "avg_l1": average_l1_error(o_rows, truth_rows, test_ctx),
                 "class_err": float(np.mean(predict_one_step(o_rows) != y_test)),
                 "wall_secs": round(wall, 3)})

    detail = {"rep": rep, "seed": rep_seed, "inclusion": lag_inclusion(chain).tolist()}
    if hypotheses:
        detail["posterior"] = {name: posterior_prob(chain, h) for name, h in hypotheses.items()}
    if keep_chains:
        detail["chain"] = chain
        detail["truth"] = proc
    return rows, detail


def run_experiment(case, T: int, N: int = 500, n_reps: int = 10, hyper: Hyperparams | None = None,
                   seed: int = 0, schedule: Schedule | None = None, mode: str = "exact",
                   hypotheses=None, keep_chains: bool = False, progress=None,
                   threads: int = 1) -> ExperimentResult:
    """Simulation study: fit on ``T`` points, evaluate on the next ``N``.

    For every replicate a fresh truth and sequence are drawn from a stream
    derived from ``seed``; the fitted model and the full-order smoothed MLE
    are scored by average L1 error against the truth and by one-step
    classification error. ``hypotheses`` maps names to :class:`Hypothesis`
    objects whose posterior probabilities are recorded per replicate.
    Replicate seeds do not depend on ``threads``, so results are identical
    for any worker count.
    """
    label, C0, lags = parse_case(case)
    q = default_q(lags)
    if T <= q or N < 1 or n_reps < 1:
        raise InputError(f"need T > q={q}, N >= 1 and n_reps >= 1")
    if hyper is None:
        hyper = Hyperparams.default(C0, q, schedule=schedule or Schedule.desk())
    elif schedule is not None:
        hyper = hyper.with_schedule(schedule)
    if hyper.q != q:
        raise InputError(f"hyperparameters are for q={hyper.q}, case needs q={q}")
    seeds = [int(r.integers(2 ** 31 - 1)) for r in spawn(make_rng(seed), n_reps)]
    args = (label, C0, lags, q, T, N, hyper, mode, hypotheses, keep_chains)
    rows, reps = [], []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda rs: _replicate(rs[0], rs[1], *args), enumerate(seeds)))
    else:
        results = (_replicate(rep, s, *args) for rep, s in enumerate(seeds))
    for rep_rows, detail in results:
        rows.extend(rep_rows)
        reps.append(detail)
        if progress is not None:
            progress(detail["rep"], rep_rows, detail)
    return ExperimentResult(rows, reps)
