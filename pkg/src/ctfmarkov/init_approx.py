"""Approximate two-stage initializer based on hard partitions of lag values.

Each lag's categories are split into ``k_j`` disjoint clusters and the
kernels are given independent Dir(alpha) priors, which makes the marginal
likelihood available in closed form. A short Metropolis chain over split
and merge moves then supplies starting allocations for the full sampler.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._random import make_rng
from .model import Hyperparams
from .sampler import collapsed_loglik, grid_index
from .seqdata import SequenceData


@dataclass
class HardPartition:
    """``assign[j][c]`` is the cluster (0-based, contiguous) of category ``c`` at lag ``j+1``."""

    assign: list

    @classmethod
    def trivial(cls, q: int, C0: int) -> "HardPartition":
        return cls([np.zeros(C0, dtype=np.int64) for _ in range(q)])

    @property
    def k(self) -> np.ndarray:
        return np.array([int(a.max()) + 1 for a in self.assign], dtype=np.int64)

    def clusters(self, j: int) -> list:
        a = self.assign[j]
        return [np.flatnonzero(a == r).tolist() for r in range(int(a.max()) + 1)]

    def allocations(self, data: SequenceData) -> np.ndarray:
        return np.stack([self.assign[j][data.w[j]] for j in range(data.q)])

    def copy(self) -> "HardPartition":
        return HardPartition([a.copy() for a in self.assign])

    def to_json(self) -> str:
        return json.dumps({"k": self.k.tolist(),
                           "clusters": [self.clusters(j) for j in range(len(self.assign))]})


def _relabel(a: np.ndarray) -> np.ndarray:
    """Contiguous labels in order of first appearance."""
    _, first, inv = np.unique(a, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv].astype(np.int64)


def partition_marginal_loglik(data: SequenceData, partition: HardPartition, alpha: float) -> float:
    z = partition.allocations(data)
    k = partition.k
    idx = grid_index(z, k)
    C0 = data.C0
    counts = np.bincount(idx * C0 + data.response, minlength=int(np.prod(k)) * C0).reshape(-1, C0)
    return collapsed_loglik(counts, alpha)


def propose_move(partition: HardPartition, j: int, rng, C0: int | None = None):
    """Split or merge one cluster of lag ``j`` (0-based).

    Returns ``(proposal, kind)`` with ``kind`` in ``{"split", "merge"}``.
    """
    a = partition.assign[j]
    C0 = a.size if C0 is None else C0
    kj = int(a.max()) + 1
    if kj == 1:
        kind = "split"
    elif kj == C0:
        kind = "merge"
    else:
        kind = "split" if rng.random() < 0.5 else "merge"
    new = partition.copy()
    if kind == "split":
        sizes = np.bincount(a, minlength=kj)
        candidates = np.flatnonzero(sizes >= 2)
        r = candidates[rng.integers(candidates.size)]
        members = np.flatnonzero(a == r)
        while True:
            side = rng.integers(2, size=members.size)
            if 0 < side.sum() < members.size:
                break
        b = a.copy()
        b[members[side == 1]] = kj
        new.assign[j] = _relabel(b)
    else:
        pairs = [(r, s) for r in range(kj) for s in range(r + 1, kj)]
        r, s = pairs[rng.integers(len(pairs))]
        b = a.copy()
        b[b == s] = r
        new.assign[j] = _relabel(b)
    return new, kind


def init_two_stage(data: SequenceData, hyper: Hyperparams, n_iter: int = 100, seed=None,
                   rng=None, return_partition: bool = False):
    """Metropolis search over hard partitions; returns ``(z_init, k_init)``.

    Every iteration visits lags ``1..q`` in order with one proposal each,
    accepted with probability ``min(1, exp(delta log marginal))``.
    """
    rng = rng if rng is not None else make_rng(seed)
    part = HardPartition.trivial(data.q, data.C0)
    cur = partition_marginal_loglik(data, part, hyper.alpha)
    if data.C0 > 1:
        for _ in range(n_iter):
            for j in range(data.q):
                prop, _ = propose_move(part, j, rng, data.C0)
                new = partition_marginal_loglik(data, prop, hyper.alpha)
                if np.log(rng.random()) < new - cur:
                    part, cur = prop, new
    z, k = part.allocations(data), part.k
    if return_partition:
        return z, k, part
    return z, k
