"""Loading, encoding and lag-windowing of categorical sequences.

Categories are stored as 0-based integer codes ``0 .. C0-1``; the original
labels are kept in ``alphabet`` so a sequence can always be decoded again.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DecodeError, InputError, InsufficientDataError

MISSING_TOKENS = frozenset({"", "NA", "N/A", "NaN", "nan", "null", "None", "?"})
FORMATS = ("plain", "csv", "fasta")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EncodedSequence:
    """An integer-coded sequence together with its label alphabet."""

    y: np.ndarray
    alphabet: tuple

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int64)
        if y.ndim != 1 or y.size == 0:
            raise InputError("sequence must be a non-empty 1-d array")
        if y.min() < 0 or y.max() >= len(self.alphabet):
            raise InputError("codes must lie in 0..C0-1")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))

    @property
    def C0(self) -> int:
        return len(self.alphabet)

    @property
    def T(self) -> int:
        return int(self.y.size)

    def decode(self) -> list:
        return [self.alphabet[c] for c in self.y]


@dataclass(frozen=True)
class SequenceData(EncodedSequence):
    """Encoded sequence plus the lag design used by the sampler.

    Attributes
    ----------
    q : int
        Maximal order. The first ``q`` observations are conditioned on and
        only used to build lags.
    w : ndarray, shape (q, T - q)
        ``w[j, i] = y[q + i - (j + 1)]``, i.e. row ``j`` holds lag ``j+1``
        for every modeled position.
    n_counts : ndarray, shape (q, C0)
        ``n_counts[j, r]`` is the frequency of category ``r`` in ``w[j]``.
    """

    q: int = 1
    w: np.ndarray = field(default=None, repr=False)
    n_counts: np.ndarray = field(default=None, repr=False)

    @property
    def t_star(self) -> int:
        """0-based index of the first modeled observation (equals ``q``)."""
        return self.q

    @property
    def n(self) -> int:
        """Number of modeled observations, ``T - q``."""
        return self.T - self.q

    @property
    def response(self) -> np.ndarray:
        return self.y[self.q:]


def encode(symbols: Iterable, alphabet: Sequence | None = None) -> EncodedSequence:
    """Map a sequence of labels onto integer codes.

    Without an explicit ``alphabet`` the distinct labels are sorted
    lexicographically (as strings), which makes the encoding deterministic.
    """
    tokens = [str(s) for s in symbols]
    if not tokens:
        raise InputError("empty sequence")
    for i, tok in enumerate(tokens):
        if tok in MISSING_TOKENS and (alphabet is None or tok not in map(str, alphabet)):
            raise InputError(f"missing value {tok!r} at position {i}")
    if alphabet is None:
        labels = tuple(sorted(set(tokens)))
    else:
        labels = tuple(str(a) for a in alphabet)
        if len(set(labels)) != len(labels):
            raise InputError("alphabet contains duplicate labels")
    index = {lab: c for c, lab in enumerate(labels)}
    codes = np.empty(len(tokens), dtype=np.int64)
    for i, tok in enumerate(tokens):
        try:
            codes[i] = index[tok]
        except KeyError:
            raise DecodeError(tok, i) from None
    return EncodedSequence(codes, labels)


def _read_plain(text: str) -> list[str]:
    return text.split()


def _read_csv(text: str, header: bool) -> list[str]:
    rows = [r for r in csv.reader(text.splitlines()) if r]
    if header and rows:
        rows = rows[1:]
    out = []
    for i, row in enumerate(rows):
        if len(row) != 1:
            raise InputError(f"csv row {i} has {len(row)} columns; expected a single column")
        out.append(row[0].strip())
    return out


def _read_fasta(text: str) -> list[str]:
    records = 0
    chunks = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            records += 1
            if records > 1:
                raise InputError("multi-record FASTA is not supported; supply one sequence per fit")
            continue
        if records == 0:
            raise InputError("FASTA sequence data before the first '>' header")
        chunks.append(line)
    return list("".join(chunks))


def load_sequence(path, format: str = "plain", alphabet: Sequence | None = None,
                  header: bool = False) -> EncodedSequence:
    """Read a single categorical sequence from ``path``.

    ``format`` is one of ``plain`` (whitespace separated tokens), ``csv``
    (one column, set ``header=True`` to skip a header row) or ``fasta``
    (one ``>`` record; every character is a symbol).
    """
    if format not in FORMATS:
        raise InputError(f"unknown format {format!r}; expected one of {FORMATS}")
    text = Path(path).read_text()
    if format == "plain":
        tokens = _read_plain(text)
    elif format == "csv":
        tokens = _read_csv(text, header)
    else:
        tokens = _read_fasta(text)
    if not tokens:
        raise InputError(f"{path}: no symbols found")
    return encode(tokens, alphabet)


def build_lag_design(seq: EncodedSequence, q: int) -> SequenceData:
    """Attach the lag matrix and per-lag category counts for maximal order ``q``."""
    q = int(q)
    if q < 1:
        raise InputError("q must be a positive integer")
    if seq.T <= q:
        raise InsufficientDataError(f"sequence length {seq.T} must exceed q={q}")
    y = seq.y
    n = seq.T - q
    w = np.empty((q, n), dtype=np.int64)
    for j in range(q):
        w[j] = y[q - (j + 1): q - (j + 1) + n]
    counts = np.stack([np.bincount(w[j], minlength=seq.C0) for j in range(q)])
    return SequenceData(y, seq.alphabet, q=q, w=_frozen(w), n_counts=_frozen(counts))


def from_codes(codes, C0: int, q: int, alphabet: Sequence | None = None) -> SequenceData:
    """Shortcut for already-encoded integer data (codes in ``0..C0-1``)."""
    if alphabet is None:
        alphabet = tuple(str(c + 1) for c in range(C0))
    return build_lag_design(EncodedSequence(np.asarray(codes), tuple(alphabet)), q)
