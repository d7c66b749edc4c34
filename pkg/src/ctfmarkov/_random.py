"""Random-number helpers shared by the sampler and the simulators."""

from __future__ import annotations

import numpy as np


def logsumexp(a, axis=None, keepdims=False):
    """Plain numpy log-sum-exp; ``-inf`` everywhere gives ``-inf``."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) driven by a single integer seed."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def spawn(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Independent child streams derived deterministically from ``rng``."""
    return [np.random.Generator(np.random.Philox(s)) for s in rng.bit_generator.seed_seq.spawn(n)]


def log_dirichlet(rng: np.random.Generator, alpha) -> np.ndarray:
    """Draw Dirichlet vectors and return their logarithms.

    Rows of ``alpha`` are independent parameter vectors. Gamma variates are
    formed as ``G(a+1) * U**(1/a)`` so that very small shapes do not
    underflow to zero.
    """
    alpha = np.asarray(alpha, dtype=float)
    g = rng.standard_gamma(alpha + 1.0)
    u = rng.random(alpha.shape)
    logg = np.log(g) + np.log(u) / alpha
    return logg - logsumexp(logg, axis=-1, keepdims=True)


def log_dirichlet_ragged(rng: np.random.Generator, alphas: list) -> list:
    """:func:`log_dirichlet` over a list of 2-d parameter arrays of differing widths."""
    flat = np.concatenate([np.asarray(a, dtype=float).ravel() for a in alphas])
    logg = np.log(rng.standard_gamma(flat + 1.0)) + np.log(rng.random(flat.size)) / flat
    blocks, start = [], 0
    for a in alphas:
        shape = np.shape(a)
        blocks.append(logg[start:start + int(np.prod(shape))].reshape(shape))
        start += blocks[-1].size
    rows = sum(b.shape[0] for b in blocks)
    pad = np.full((rows, max(b.shape[1] for b in blocks)), -np.inf)
    r = 0
    for b in blocks:
        pad[r:r + b.shape[0], :b.shape[1]] = b
        r += b.shape[0]
    norm = logsumexp(pad, axis=1)
    out, r = [], 0
    for b in blocks:
        out.append(b - norm[r:r + b.shape[0], None])
        r += b.shape[0]
    return out


def categorical_from_logits(logits: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF categorical draw along the last axis.

    ``u`` holds one uniform per row. Logits are max-shifted before
    exponentiation; the first index whose cumulative mass exceeds ``u``
    wins, so ties go to the smaller index.
    """
    logits = np.asarray(logits, dtype=float)
    p = np.exp(logits - logits.max(axis=-1, keepdims=True))
    c = np.cumsum(p, axis=-1)
    target = np.asarray(u)[..., None] * c[..., -1:]
    idx = (c <= target).sum(axis=-1)
    return np.minimum(idx, logits.shape[-1] - 1)
