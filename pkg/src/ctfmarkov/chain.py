"""Container for stored posterior samples and its JSON-lines form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .model import Schedule


@dataclass
class PosteriorChain:
    """Thinned post-burn-in output of one sampler run.

    ``k`` and ``ktilde`` are ``(S, q)`` arrays; ``loglik`` is the collapsed
    log likelihood ``log p(y | z)`` of each stored sample. ``snapshots``
    (``(S, N, C0)``) holds transition probabilities at ``contexts`` when
    requested at fit time; ``tensors`` holds full dense tables.
    """

    iters: np.ndarray
    k: np.ndarray
    ktilde: np.ndarray
    loglik: np.ndarray
    n_clusters: np.ndarray
    schedule: Schedule
    seed: object = None
    contexts: np.ndarray | None = None
    snapshots: np.ndarray | None = None
    tensors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.iters.size)

    @property
    def q(self) -> int:
        return int(self.k.shape[1])

    def records(self):
        for s in range(len(self)):
            yield {
                "iter": int(self.iters[s]),
                "k": [int(v) for v in self.k[s]],
                "ktilde": [int(v) for v in self.ktilde[s]],
                "loglik": float(self.loglik[s]),
                "n_clusters": int(self.n_clusters[s]),
            }

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")

    def save_snapshots_csv(self, path) -> None:
        """One row per (sample, context) with the evaluated probabilities."""
        if self.snapshots is None:
            return
        S, N, C0 = self.snapshots.shape
        with open(path, "w") as fh:
            fh.write(",".join(["iter", "context"] + [f"p{c}" for c in range(C0)]) + "\n")
            for s in range(S):
                for i in range(N):
                    vals = ",".join(repr(float(v)) for v in self.snapshots[s, i])
                    fh.write(f"{int(self.iters[s])},{i},{vals}\n")

    @classmethod
    def from_jsonl(cls, path, schedule: Schedule | None = None) -> "PosteriorChain":
        recs = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
        if not recs:
            raise InputError(f"{path}: empty chain file")
        return cls(
            iters=np.array([r["iter"] for r in recs], dtype=np.int64),
            k=np.array([r["k"] for r in recs], dtype=np.int64),
            ktilde=np.array([r["ktilde"] for r in recs], dtype=np.int64),
            loglik=np.array([r["loglik"] for r in recs], dtype=float),
            n_clusters=np.array([r.get("n_clusters", 0) for r in recs], dtype=np.int64),
            schedule=schedule or Schedule(int(recs[-1]["iter"]), 0, 1),
        )
