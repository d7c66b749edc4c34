"""Posterior summaries, lag selection, Bayes-factor tests and MCMC diagnostics.

Lag importance is judged by the number of occupied classes ``ktilde_j`` of
each lag's allocations: lag ``j`` matters in a sample iff ``ktilde_j > 1``.
"""

from __future__ import annotations

import bisect
import math
import re
from dataclasses import dataclass

import numpy as np

from .chain import PosteriorChain
from .errors import ConfigurationError, HypothesisParseError, InputError, UndefinedBayesFactorError
from .model import ktilde_prior_prob_one

__all__ = [
    "PosteriorChain", "Hypothesis", "ktilde_of", "lag_inclusion", "maximal_order_distribution",
    "posterior_prob", "prior_prob", "bayes_factor", "posterior_mean_transition",
    "predict_one_step", "classification_error", "batch_means_mcse", "running_quantiles",
    "summarize", "parse_hypotheses",
]


def ktilde_of(z_j) -> int:
    z_j = np.asarray(z_j)
    if z_j.size == 0:
        raise InputError("empty allocation vector")
    return int(np.unique(z_j).size)


def _check(chain: PosteriorChain) -> None:
    if len(chain) == 0:
        raise InputError("chain has no stored samples")


def lag_inclusion(chain: PosteriorChain) -> np.ndarray:
    """Fraction of samples in which each lag is important."""
    _check(chain)
    return (chain.ktilde > 1).mean(axis=0)


def sample_orders(ktilde: np.ndarray) -> np.ndarray:
    imp = np.asarray(ktilde) > 1
    q = imp.shape[1]
    last = q - np.argmax(imp[:, ::-1], axis=1)
    return np.where(imp.any(axis=1), last, 0)


def maximal_order_distribution(chain: PosteriorChain) -> np.ndarray:
    """Relative frequencies of the maximal important lag, indexed ``0..q``."""
    _check(chain)
    orders = sample_orders(chain.ktilde)
    return np.bincount(orders, minlength=chain.q + 1) / orders.size


_ATOM = re.compile(r"^(?:k|ktilde|lag)?\s*(\d+|rest|others)\s*(=|==|>)\s*1$")


@dataclass(frozen=True)
class Hypothesis:
    """Per-lag constraints on ``ktilde``, optionally negated.

    ``constraints`` maps 1-based lags to ``"=1"`` or ``">1"``; ``rest``
    applies to every lag not listed. Text form: ``"k4>1"``,
    ``"k8>1 k9=1 k10=1"``, ``"k1>1 k4>1 k8>1 rest=1"`` and ``"not k5>1"``.
    """

    constraints: tuple
    rest: str | None = None
    negated: bool = False
    text: str = ""

    def __post_init__(self):
        if not self.constraints and self.rest is None:
            raise HypothesisParseError("hypothesis constrains no lag")

    @classmethod
    def parse(cls, text: str, line: int | None = None) -> "Hypothesis":
        src = text.strip()
        body = src
        negated = False
        if body.lower().startswith("not "):
            negated, body = True, body[4:].strip()
        elif body.startswith("!"):
            negated, body = True, body[1:].strip()
        body = re.sub(r"\s*(==|=|>)\s*", r"\1", body.strip("() "))
        atoms = [a for a in re.split(r"[\s,&]+", body) if a and a.lower() != "and"]
        cons, rest = {}, None
        for atom in atoms:
            m = _ATOM.match(atom.replace(" ", ""))
            if not m:
                raise HypothesisParseError(f"cannot parse constraint {atom!r} in {src!r}", line)
            lag, op = m.group(1), "=1" if m.group(2) in ("=", "==") else ">1"
            if lag in ("rest", "others"):
                if rest is not None and rest != op:
                    raise HypothesisParseError(f"contradictory constraints on remaining lags in {src!r}", line)
                rest = op
                continue
            lag = int(lag)
            if lag < 1:
                raise HypothesisParseError(f"lags are 1-based, got {lag}", line)
            if cons.get(lag, op) != op:
                raise HypothesisParseError(f"lag {lag} constrained to both =1 and >1 in {src!r}", line)
            cons[lag] = op
        if not cons and rest is None:
            raise HypothesisParseError(f"hypothesis {src!r} constrains no lag", line)
        return cls(tuple(sorted(cons.items())), rest, negated, src)

    def negate(self) -> "Hypothesis":
        return Hypothesis(self.constraints, self.rest, not self.negated, f"not ({self.text})")

    def lag_ops(self, q: int) -> dict:
        ops = {lag: op for lag, op in self.constraints}
        if any(lag > q for lag in ops):
            raise InputError(f"hypothesis {self.text!r} refers to lags beyond q={q}")
        if self.rest is not None:
            for lag in range(1, q + 1):
                ops.setdefault(lag, self.rest)
        return ops

    def holds(self, ktilde) -> np.ndarray:
        kt = np.atleast_2d(np.asarray(ktilde))
        ok = np.ones(kt.shape[0], dtype=bool)
        for lag, op in self.lag_ops(kt.shape[1]).items():
            col = kt[:, lag - 1]
            ok &= (col == 1) if op == "=1" else (col > 1)
        return ~ok if self.negated else ok

    def __str__(self) -> str:
        return self.text or repr(self)


def posterior_prob(chain: PosteriorChain, hyp: Hypothesis) -> float:
    _check(chain)
    return float(hyp.holds(chain.ktilde).mean())


def prior_prob(hyp: Hypothesis, n_counts, gamma, phi: float, mode: str = "exact") -> float:
    """Prior probability of ``hyp`` built from per-lag ``P(ktilde_j = 1)``.

    Lags are independent a priori given the observed lag design, so the
    per-lag probabilities multiply.
    """
    n_counts = np.asarray(n_counts)
    q, C0 = n_counts.shape
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (q,))
    p = 1.0
    for lag, op in hyp.lag_ops(q).items():
        one = min(1.0, ktilde_prior_prob_one(gamma[lag - 1], phi, lag, n_counts[lag - 1], C0, mode))
        p *= one if op == "=1" else 1.0 - one
    return 1.0 - p if hyp.negated else p


def bayes_factor(chain_or_posts, h0: Hypothesis | None = None, h1: Hypothesis | None = None,
                 prior_p0: float = 0.5, prior_p1: float = 0.5) -> float:
    """Bayes factor in favour of ``h1`` against ``h0``.

    ``chain_or_posts`` is a chain (posteriors estimated as sample
    proportions) or a pair ``(post0, post1)``. Returns ``math.inf`` when
    ``h0`` was never visited but ``h1`` was.
    """
    if not (0 < prior_p0 < 1 and 0 < prior_p1 < 1):
        raise InputError("prior probabilities must lie in (0, 1)")
    if isinstance(chain_or_posts, PosteriorChain):
        post0 = posterior_prob(chain_or_posts, h0)
        post1 = posterior_prob(chain_or_posts, h1)
    else:
        post0, post1 = map(float, chain_or_posts)
    if post0 == 0 and post1 == 0:
        raise UndefinedBayesFactorError("both posterior probabilities are zero")
    if post0 == 0:
        return math.inf
    return (post1 / prior_p1) / (post0 / prior_p0)


def posterior_mean_transition(chain: PosteriorChain, contexts=None) -> np.ndarray:
    """Average of the stored transition evaluations, shape ``(N, C0)``."""
    if chain.snapshots is None:
        raise ConfigurationError("chain was run without transition snapshots")
    if contexts is not None:
        contexts = np.atleast_2d(np.asarray(contexts))
        if chain.contexts is None or contexts.shape != chain.contexts.shape or np.any(contexts != chain.contexts):
            raise ConfigurationError("requested contexts were not recorded during sampling")
    return chain.snapshots.mean(axis=0)


def predict_one_step(probs) -> np.ndarray:
    """Most probable category per row; ties go to the smaller index."""
    return np.argmax(np.asarray(probs), axis=-1)


def classification_error(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise InputError("predictions and truth must be nonempty and of equal length")
    return float(np.mean(pred != truth))


def batch_means_mcse(trace, batch_len: int = 100) -> float:
    """Monte Carlo standard error of the mean from non-overlapping batch means."""
    x = np.asarray(trace, dtype=float)
    nb = x.size // batch_len
    if nb < 2:
        raise InputError(f"trace of length {x.size} is too short for batch length {batch_len}")
    means = x[: nb * batch_len].reshape(nb, batch_len).mean(axis=1)
    return float(np.sqrt(means.var(ddof=1) / nb))


def running_quantiles(trace, probs=(0.05, 0.95)) -> np.ndarray:
    """Quantile paths of growing prefixes, shape ``(len(probs), n)``.

    The ``p`` quantile of the first ``n`` values is the order statistic of
    rank ``ceil(p n)``.
    """
    x = np.asarray(trace, dtype=float)
    if x.size == 0:
        raise InputError("empty trace")
    out = np.empty((len(probs), x.size))
    seen = []
    for n, v in enumerate(x, start=1):
        bisect.insort(seen, v)
        for i, p in enumerate(probs):
            out[i, n - 1] = seen[max(1, math.ceil(p * n)) - 1]
    return out


def parse_hypotheses(text: str) -> list:
    """Parse a hypotheses file.

    One test per line: ``name: H0 [| H1] [| p0 p1]``. ``H1`` defaults to
    the complement of ``H0``. Blank lines and ``#`` comments are skipped.
    """
    tests = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, rest = line.partition(":")
        if not sep:
            name, rest = f"test{len(tests) + 1}", line
        parts = [p.strip() for p in rest.split("|")]
        h0 = Hypothesis.parse(parts[0], lineno)
        h1 = Hypothesis.parse(parts[1], lineno) if len(parts) > 1 and parts[1] else h0.negate()
        priors = None
        if len(parts) > 2:
            try:
                priors = tuple(float(v) for v in parts[2].split())
            except ValueError:
                raise HypothesisParseError(f"bad prior probabilities {parts[2]!r}", lineno) from None
            if len(priors) != 2:
                raise HypothesisParseError("expected two prior probabilities", lineno)
        tests.append({"name": name.strip(), "h0": h0, "h1": h1, "priors": priors})
    return tests


def run_tests(chain: PosteriorChain, tests: list, n_counts=None, gamma=None, phi: float = 0.5) -> list:
    """Evaluate parsed tests; priors default to the per-lag closed form."""
    out = []
    for t in tests:
        post0 = posterior_prob(chain, t["h0"])
        post1 = posterior_prob(chain, t["h1"])
        if t["priors"] is not None:
            p0, p1 = t["priors"]
        elif n_counts is not None:
            p0 = prior_prob(t["h0"], n_counts, gamma, phi)
            p1 = prior_prob(t["h1"], n_counts, gamma, phi)
        else:
            p0 = p1 = None
        bf = None
        if p0 is not None and 0 < p0 < 1 and 0 < p1 < 1 and (post0 > 0 or post1 > 0):
            bf = bayes_factor((post0, post1), prior_p0=p0, prior_p1=p1)
        out.append({"name": t["name"], "h0": str(t["h0"]), "h1": str(t["h1"]), "p0": p0, "p1": p1,
                    "post0": post0, "post1": post1,
                    "bf10": "inf" if bf == math.inf else bf})
    return out


def summarize(chain: PosteriorChain, tests: list | None = None, batch_len: int = 100) -> dict:
    """JSON-ready summary: inclusion, order pmf, tests and MCSEs."""
    order = maximal_order_distribution(chain)
    mcse = {}
    traces = {"loglik": chain.loglik}
    for j in range(chain.q):
        traces[f"ktilde{j + 1}"] = chain.ktilde[:, j]
    if chain.snapshots is not None:
        for i in range(min(chain.snapshots.shape[1], 20)):
            for c in range(chain.snapshots.shape[2]):
                traces[f"ctx{i}_p{c}"] = chain.snapshots[:, i, c]
    for key, tr in traces.items():
        try:
            mcse[key] = batch_means_mcse(tr, batch_len)
        except InputError:
            mcse[key] = None
    return {
        "n_samples": len(chain),
        "inclusion": lag_inclusion(chain).tolist(),
        "order_pmf": {str(o): float(p) for o, p in enumerate(order)},
        "tests": tests or [],
        "mcse": mcse,
    }
