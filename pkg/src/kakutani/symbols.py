"""Symbol strings.

Tokens are stored as ``int64``.  Letters are non-negative integers; the
spacers ``b``, ``e`` and the filler ``h`` are negative sentinels, so they can
never compare equal to a letter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

B = -1
E = -2
H = -3

_LITERALS = {"b": B, "e": E, "h": H}
_NAMES = {v: k for k, v in _LITERALS.items()}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SymbolString:
    """Immutable finite sequence of tokens."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 1:
            raise ValueError("SymbolString needs a one-dimensional token array")
        if arr.size and (arr.max() >= 2**32 or arr.min() < H):
            raise ValueError("token out of range")
        object.__setattr__(self, "data", _freeze(arr))

    @classmethod
    def of(cls, tokens: "StringLike") -> "SymbolString":
        if isinstance(tokens, SymbolString):
            return tokens
        if isinstance(tokens, str):
            return parse_string(tokens)
        return cls(np.asarray(list(tokens) if not isinstance(tokens, np.ndarray) else tokens, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.data.shape[0])

    def __iter__(self):
        return iter(self.data.tolist())

    def __getitem__(self, item):
        if isinstance(item, slice):
            return SymbolString(self.data[item])
        return int(self.data[item])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymbolString):
            return NotImplemented
        return np.array_equal(self.data, other.data)

    def __hash__(self) -> int:
        return hash(self.data.tobytes())

    def __add__(self, other: "SymbolString") -> "SymbolString":
        return SymbolString(np.concatenate([self.data, SymbolString.of(other).data]))

    def reversed(self) -> "SymbolString":
        return SymbolString(self.data[::-1])

    def __str__(self) -> str:
        return format_string(self)

    def __repr__(self) -> str:
        text = format_string(self)
        if len(text) > 60:
            text = text[:57] + "..."
        return f"SymbolString({text!r})"


StringLike = Union[SymbolString, str, Sequence[int], np.ndarray]


def as_array(x: StringLike) -> np.ndarray:
    """Token array of any string-like input."""
    if isinstance(x, SymbolString):
        return x.data
    if isinstance(x, np.ndarray):
        return x.astype(np.int64, copy=False)
    if isinstance(x, str):
        return parse_string(x).data
    return np.asarray(list(x), dtype=np.int64)


def parse_token(tok: str) -> int:
    if tok in _LITERALS:
        return _LITERALS[tok]
    value = int(tok)
    if value < 0:
        raise ValueError(f"negative letter {tok!r}")
    return value


def parse_string(text: str) -> SymbolString:
    """Parse the shared text format: tokens separated by single spaces."""
    text = text.strip()
    if not text:
        return SymbolString(np.zeros(0, dtype=np.int64))
    return SymbolString(np.array([parse_token(t) for t in text.split()], dtype=np.int64))


def token_name(value: int) -> str:
    return _NAMES.get(int(value), str(int(value)))


def format_string(x: StringLike) -> str:
    return " ".join(token_name(v) for v in as_array(x).tolist())


def read_strings(path) -> list[SymbolString]:
    with open(path, encoding="utf-8") as fh:
        return [parse_string(line) for line in fh if line.strip()]


def write_strings(path, strings: Iterable[StringLike]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in strings:
            fh.write(format_string(s) + "\n")


@dataclass(frozen=True)
class RleString:
    """Run-length form: parallel arrays of symbols and positive counts."""

    symbols: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        sym = _freeze(np.asarray(self.symbols))
        cnt = _freeze(np.asarray(self.counts))
        if sym.shape != cnt.shape:
            raise ValueError("symbols and counts differ in length")
        if cnt.size and cnt.min() <= 0:
            raise ValueError("run counts must be positive")
        if sym.size > 1 and np.any(sym[1:] == sym[:-1]):
            raise ValueError("adjacent runs must carry distinct symbols")
        object.__setattr__(self, "symbols", sym)
        object.__setattr__(self, "counts", cnt)

    @classmethod
    def from_runs(cls, runs: Iterable[tuple[int, int]]) -> "RleString":
        """Build from (symbol, count) pairs, merging equal neighbours."""
        syms: list[int] = []
        cnts: list[int] = []
        for s, c in runs:
            if c <= 0:
                continue
            if syms and syms[-1] == s:
                cnts[-1] += c
            else:
                syms.append(int(s))
                cnts.append(int(c))
        return cls(np.array(syms, dtype=np.int64), np.array(cnts, dtype=np.int64))

    @classmethod
    def encode(cls, x: StringLike) -> "RleString":
        arr = as_array(x)
        if arr.size == 0:
            return cls(np.zeros(0, np.int64), np.zeros(0, np.int64))
        starts = np.flatnonzero(np.concatenate([[True], arr[1:] != arr[:-1]]))
        counts = np.diff(np.concatenate([starts, [arr.size]]))
        return cls(arr[starts], counts)

    @property
    def runs(self) -> list[tuple[int, int]]:
        return list(zip(self.symbols.tolist(), self.counts.tolist()))

    def __len__(self) -> int:
        return int(self.counts.sum())

    def expand(self) -> SymbolString:
        return SymbolString(np.repeat(self.symbols, self.counts))

    def window(self, start: int, length: int) -> "RleString":
        """Substring [start, start+length) without expanding."""
        if start < 0 or length < 0 or start + length > len(self):
            raise IndexError("window outside the string")
        ends = np.cumsum(self.counts)
        begins = ends - self.counts
        lo = int(np.searchsorted(ends, start, side="right"))
        hi = int(np.searchsorted(begins, start + length, side="left"))
        sym = self.symbols[lo:hi].copy()
        cnt = np.minimum(ends[lo:hi], start + length) - np.maximum(begins[lo:hi], start)
        keep = cnt > 0
        return RleString(sym[keep], cnt[keep])

    def reversed(self) -> "RleString":
        return RleString(self.symbols[::-1], self.counts[::-1])
