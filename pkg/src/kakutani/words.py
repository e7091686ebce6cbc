"""Word collections of a construction sequence and checks on them.

A ``LabeledWordSet`` at level ``n`` stores its words either as raw tokens
(when ``parent`` is ``None``) or as index strings over the words of the
previous level.  Raw expansion is available on demand, under a size cap.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .errors import InputTooShort, InvariantViolation, LengthMismatch, NoValidParse, ParseFailure
from .symbols import H, StringLike, SymbolString, as_array, format_string, parse_string
from .trees import GroupActionTable

DEFAULT_EXPAND_CAP = 1 << 26

_HASH_BASE = np.uint64(0x9E3779B97F4A7C15)
_HASH_SALT = np.uint64(0x632BE59BD9B4E019)


# --------------------------------------------------------------------------
# word sets


@dataclass(eq=False)
class LabeledWordSet:
    level: int
    words: np.ndarray
    parent: "LabeledWordSet | None" = None
    q_classes: dict = field(default_factory=dict)
    actions: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.words, dtype=np.int64))
        if w.ndim != 2:
            raise ValueError("words must form a 2-d array (one row per word)")
        w.setflags(write=False)
        self.words = w
        self.q_classes = {int(s): np.asarray(v, dtype=np.int64) for s, v in self.q_classes.items()}

    @property
    def count(self) -> int:
        return int(self.words.shape[0])

    @property
    def k(self) -> int:
        """Number of parent blocks (or symbols, at the base) per word."""
        return int(self.words.shape[1])

    @property
    def h(self) -> int:
        return self.k * (self.parent.h if self.parent is not None else 1)

    @property
    def s_max(self) -> int:
        return max(self.q_classes) if self.q_classes else 0

    def __len__(self) -> int:
        return self.count

    def class_count(self, s: int) -> int:
        return int(self.q_classes[s].max()) + 1

    def class_strings(self, s: int) -> np.ndarray:
        """Each word written in the Q_s classes of the parent words."""
        if self.parent is None:
            raise ValueError("base level has no parent classes")
        return self.parent.q_classes[s][self.words]

    def expand(self, i: int, cap: int = DEFAULT_EXPAND_CAP) -> SymbolString:
        if self.h > cap:
            raise ValueError(f"word length {self.h} exceeds the expansion cap {cap}")
        return SymbolString(self._expand_rows(self.words[i : i + 1])[0])

    def raw_words(self, cap: int = DEFAULT_EXPAND_CAP) -> np.ndarray:
        if self.h * self.count > cap:
            raise ValueError(f"{self.count} words of length {self.h} exceed the expansion cap {cap}")
        return self._expand_rows(self.words)

    def _expand_rows(self, rows: np.ndarray) -> np.ndarray:
        if self.parent is None:
            return rows
        sub = self.parent._expand_rows(self.parent.words)
        return sub[rows].reshape(rows.shape[0], -1)

    def chain(self) -> list["LabeledWordSet"]:
        out = []
        node: LabeledWordSet | None = self
        while node is not None:
            out.append(node)
            node = node.parent
        return out[::-1]

    def to_json(self, include_parent_chain: bool = False) -> dict:
        base = self.parent is None
        data = {
            "level": self.level,
            "h": self.h,
            "k": self.k,
            "word_alphabet": "symbols" if base else f"words of level {self.parent.level} (1-based)",
            "words": [format_string(row if base else row + 1) for row in self.words],
            "q_classes": {str(s): v.tolist() for s, v in sorted(self.q_classes.items())},
            "actions": {str(s): a.to_json() for s, a in sorted(self.actions.items())},
            "meta": _plain(self.meta),
        }
        if include_parent_chain and self.parent is not None:
            data["parent"] = self.parent.to_json(True)
        return data

    @classmethod
    def from_json(cls, data: dict, parent: "LabeledWordSet | None" = None) -> "LabeledWordSet":
        if parent is None and "parent" in data:
            parent = cls.from_json(data["parent"])
        rows = [parse_string(w).data for w in data["words"]]
        words = np.array(rows, dtype=np.int64)
        if parent is not None:
            words = words - 1
        return cls(
            level=int(data["level"]),
            words=words,
            parent=parent,
            q_classes={int(s): v for s, v in data.get("q_classes", {}).items()},
            actions={int(s): GroupActionTable.from_json(a) for s, a in data.get("actions", {}).items()},
            meta=data.get("meta", {}),
        )

    def dumps(self, include_parent_chain: bool = True) -> str:
        return json.dumps(self.to_json(include_parent_chain), sort_keys=True)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.blake2b(digest_size=16)
        for ws in self.chain():
            h.update(np.int64(ws.level).tobytes())
            h.update(ws.words.tobytes())
            for s in sorted(ws.q_classes):
                h.update(ws.q_classes[s].tobytes())
        return h.hexdigest()


def _plain(value):
    from .reports import jsonable

    return jsonable(value)


def base_alphabet(size: int, first_letter: int = 1) -> LabeledWordSet:
    """Level-0 word set: single symbols, all in one Q_0 class."""
    words = np.arange(first_letter, first_letter + size, dtype=np.int64)[:, None]
    return LabeledWordSet(
        level=0,
        words=words,
        q_classes={0: np.zeros(size, dtype=np.int64)},
        actions={0: GroupActionTable.trivial(1)},
        meta={"alphabet_size": size},
    )


def as_rows(ws) -> list[np.ndarray]:
    if isinstance(ws, LabeledWordSet):
        return list(ws.raw_words())
    if isinstance(ws, np.ndarray) and ws.ndim == 2:
        return list(ws)
    return [as_array(w) for w in ws]


# --------------------------------------------------------------------------
# hashing helpers


@njit(cache=True)
def _prefix_kernel(rows, base, salt):
    n, k = rows.shape
    out = np.zeros((n, k + 1), dtype=np.uint64)
    for i in range(n):
        acc = np.uint64(0)
        for j in range(k):
            acc = acc * base + (np.uint64(rows[i, j]) + salt)
            out[i, j + 1] = acc
    return out


def _prefix_hashes(rows: np.ndarray) -> np.ndarray:
    """``out[:, L]`` is the hash of the first ``L`` entries (``L = 0..k``)."""
    return _prefix_kernel(np.ascontiguousarray(rows, dtype=np.int64), _HASH_BASE, _HASH_SALT)


@njit(cache=True)
def _powers_kernel(k, base):
    out = np.ones(k + 1, dtype=np.uint64)
    for i in range(1, k + 1):
        out[i] = out[i - 1] * base
    return out


def _powers(k: int) -> np.ndarray:
    return _powers_kernel(k, _HASH_BASE)


def _window_hashes(pre: np.ndarray, pw: np.ndarray, length: int) -> np.ndarray:
    """Hashes of all windows of ``length`` (columns = start offsets)."""
    with np.errstate(over="ignore"):
        return pre[:, length:] - pre[:, : pre.shape[1] - length] * pw[length]


# --------------------------------------------------------------------------
# unique readability


def check_unique_readability(ws, method: str = "auto") -> tuple[bool, dict | None]:
    """True iff no word occurs in a concatenation ``uv`` with both ends spilling.

    ``method`` is ``brute`` (all triples and offsets), ``hash`` (equal-length
    words, candidates verified exactly) or ``auto``.
    """
    rows = ws.words if isinstance(ws, LabeledWordSet) and ws.parent is not None else None
    if rows is None:
        rows_list = as_rows(ws)
        lengths = {r.size for r in rows_list}
        if method == "hash" or (method == "auto" and len(lengths) == 1 and len(rows_list) * max(lengths) > 4096):
            if len(lengths) != 1:
                raise LengthMismatch("hash method needs equal-length words")
            return _ur_hash(np.array(rows_list))
        return _ur_brute(rows_list)
    if method == "brute":
        return _ur_brute(list(rows))
    return _ur_hash(rows)


def _ur_brute(rows: list[np.ndarray]) -> tuple[bool, dict | None]:
    for iu, u in enumerate(rows):
        for iv, v in enumerate(rows):
            uv = np.concatenate([u, v])
            for iw, w in enumerate(rows):
                for off in range(1, uv.size - w.size):
                    if np.array_equal(uv[off : off + w.size], w):
                        return False, {"u": iu, "v": iv, "w": iw, "offset": off}
    return True, None


def _ur_hash(rows: np.ndarray) -> tuple[bool, dict | None]:
    n, k = rows.shape
    if k < 2:
        return True, None
    pre = _prefix_hashes(rows)
    pw = _powers(k)
    # suf[:, L] hashes the last L entries
    suf = np.empty_like(pre)
    with np.errstate(over="ignore"):
        for L in range(k + 1):
            suf[:, L] = pre[:, k] - pre[:, k - L] * pw[L]
    for off in range(1, k):
        left = k - off  # w[:left] must be a suffix of u, w[left:] a prefix of v
        a = np.isin(pre[:, left], suf[:, left])
        if not a.any():
            continue
        b = np.isin(suf[:, off], pre[:, off])
        for iw in np.flatnonzero(a & b).tolist():
            w = rows[iw]
            us = np.flatnonzero((rows[:, k - left :] == w[:left]).all(axis=1))
            vs = np.flatnonzero((rows[:, :off] == w[left:]).all(axis=1))
            if us.size and vs.size:
                return False, {"u": int(us[0]), "v": int(vs[0]), "w": int(iw), "offset": k - left}
    return True, None


# --------------------------------------------------------------------------
# factorisation, uniformity and E3


def factorize(parent_rows: np.ndarray, child_rows: np.ndarray) -> np.ndarray:
    """Index strings of child words cut into aligned parent words."""
    parent_rows = np.asarray(parent_rows)
    child_rows = np.asarray(child_rows)
    hm = parent_rows.shape[1]
    if child_rows.shape[1] % hm:
        raise ParseFailure(f"child length {child_rows.shape[1]} is not a multiple of {hm}")
    lookup = {row.tobytes(): i for i, row in enumerate(parent_rows)}
    k = child_rows.shape[1] // hm
    out = np.empty((child_rows.shape[0], k), dtype=np.int64)
    for c, row in enumerate(child_rows):
        for j in range(k):
            key = row[j * hm : (j + 1) * hm].tobytes()
            if key not in lookup:
                raise ParseFailure(f"child word {c} block {j} is not a parent word")
            out[c, j] = lookup[key]
    return out


def _child_indices(parent, child) -> tuple[np.ndarray, int]:
    if isinstance(child, LabeledWordSet) and child.parent is parent:
        n_parent = parent.count if isinstance(parent, LabeledWordSet) else len(parent)
        return child.words, n_parent
    prow = np.array(as_rows(parent))
    crow = np.array(as_rows(child))
    return factorize(prow, crow), prow.shape[0]


def check_strong_uniformity(parent, child) -> tuple[bool, int | None, np.ndarray]:
    """Whether every parent word occurs equally often in every child word.

    Returns ``(ok, c, counts)`` with ``counts[i, j]`` the number of times parent
    word ``j`` occurs in child word ``i``.
    """
    idx, n_parent = _child_indices(parent, child)
    counts = np.zeros((idx.shape[0], n_parent), dtype=np.int64)
    for i in range(idx.shape[0]):
        counts[i] = np.bincount(idx[i], minlength=n_parent)
    c = int(counts[0, 0]) if counts.size else None
    ok = bool(counts.size) and bool((counts == c).all())
    return ok, (c if ok else None), counts


def check_e3(parent, child) -> tuple[bool, dict | None]:
    """No shifted window of half length or more equals a word's prefix."""
    idx, _ = _child_indices(parent, child)
    return e3_on_indices(idx)


def e3_on_indices(idx: np.ndarray) -> tuple[bool, dict | None]:
    n, K = idx.shape
    k0 = max(1, K // 2)
    if K - k0 < 1:
        return True, None
    pre = _prefix_hashes(idx)
    pw = _powers(K)
    heads = pre[:, k0]
    win = _window_hashes(pre, pw, k0)[:, 1 : K - k0 + 1]  # offsets i = 1..K-k0
    hit = np.isin(win, heads)
    for w, j in zip(*np.nonzero(hit)):
        i = int(j) + 1
        seg = idx[w, i : i + k0]
        matches = np.flatnonzero((idx[:, :k0] == seg).all(axis=1))
        if matches.size:
            return False, {"w": int(w), "i": i, "w_prime": int(matches[0]), "k": k0}
    return True, None


# --------------------------------------------------------------------------
# reversal


def rev_words(ws: LabeledWordSet, _memo: dict | None = None) -> LabeledWordSet:
    """Reverse every word; equivalence labels are carried over unchanged."""
    memo = {} if _memo is None else _memo
    if id(ws) in memo:
        return memo[id(ws)]
    parent = rev_words(ws.parent, memo) if ws.parent is not None else None
    out = LabeledWordSet(
        level=ws.level,
        words=ws.words[:, ::-1],
        parent=parent,
        q_classes=dict(ws.q_classes),
        actions=dict(ws.actions),
        meta={**ws.meta, "reversed": True},
    )
    memo[id(ws)] = out
    return out


# --------------------------------------------------------------------------
# parsing of names


@dataclass(frozen=True)
class BlockParse:
    blocks: list  # (offset, word index)
    prefix: int  # uncovered symbols before the first block
    suffix: int  # uncovered symbols after the last block


def _raw_table(ws) -> np.ndarray:
    return ws.raw_words() if isinstance(ws, LabeledWordSet) else np.array(as_rows(ws))


def parse_blocks(x: StringLike, ws, table: np.ndarray | None = None) -> BlockParse:
    """Unique tiling of a maximal interior segment of ``x`` by words of ``ws``."""
    arr = as_array(x)
    rows = _raw_table(ws) if table is None else table
    h = rows.shape[1]
    if arr.size < h:
        raise NoValidParse("string shorter than one word")
    pw = _powers(h)
    pre = _prefix_hashes(arr[None, :])
    win = _window_hashes(pre, pw, h)[0]
    word_hash = _prefix_hashes(rows)[:, h]
    order = np.argsort(word_hash)
    sorted_hash = word_hash[order]
    candidates = []
    for off in range(h):
        starts = np.arange(off, arr.size - h + 1, h)
        if starts.size == 0:
            continue
        pos = np.searchsorted(sorted_hash, win[starts])
        pos = np.minimum(pos, sorted_hash.size - 1)
        if not (sorted_hash[pos] == win[starts]).all():
            continue
        idx = order[pos]
        if all(np.array_equal(arr[s : s + h], rows[i]) for s, i in zip(starts.tolist(), idx.tolist())):
            candidates.append((off, starts, idx))
    if not candidates:
        raise NoValidParse("no offset tiles the interior with words")
    if len(candidates) > 1:
        raise InvariantViolation(f"ambiguous parse at offsets {[c[0] for c in candidates]}")
    off, starts, idx = candidates[0]
    last = int(starts[-1]) + h
    return BlockParse([(int(s), int(i)) for s, i in zip(starts, idx)], off, arr.size - last)


def odometer_coords(x: StringLike, levels: Sequence[LabeledWordSet]) -> list[int]:
    """Odometer coordinates of position 0 of ``x``.

    ``levels`` are consecutive word sets, lowest first; the lowest may be the
    symbol level.  Entry ``t`` is the index of the level-``t`` block holding
    position 0 inside the level-``t+1`` block holding position 0.
    """
    arr = as_array(x)
    heights = [ws.h for ws in levels]
    within = []
    for ws in levels:
        if ws.h == 1:
            within.append(0)
            continue
        parse = parse_blocks(arr, ws)
        first = parse.blocks[0][0]
        within.append((ws.h - first) % ws.h)
    coords = []
    for t in range(len(levels) - 1):
        coords.append(within[t + 1] // heights[t])
    return coords


def project_classes(x: StringLike, ws: LabeledWordSet, s: int, table: np.ndarray | None = None) -> tuple[SymbolString, int]:
    """Class letters (label + 1) of the covering ``ws`` blocks, per position.

    Only the parsed interior is projected; the returned integer is its start
    offset within ``x``.
    """
    parse = parse_blocks(x, ws, table)
    labels = ws.q_classes[s]
    out = np.concatenate([np.full(ws.h, labels[i] + 1, dtype=np.int64) for _, i in parse.blocks])
    return SymbolString(out), parse.prefix


def refinement_map(ws: LabeledWordSet, s: int) -> np.ndarray:
    """Map from Q_{s+1} labels to the Q_s labels they refine."""
    fine, coarse = ws.q_classes[s + 1], ws.q_classes[s]
    out = np.full(int(fine.max()) + 1, -1, dtype=np.int64)
    for f, c in zip(fine.tolist(), coarse.tolist()):
        if out[f] not in (-1, c):
            raise InvariantViolation(f"Q_{s + 1} class {f} meets two Q_{s} classes")
        out[f] = c
    return out


# --------------------------------------------------------------------------
# special-transformation names and codes


def expand_tf_name(base: StringLike, f: Sequence[int]) -> SymbolString:
    arr = as_array(base)
    f = np.asarray(f, dtype=np.int64)
    if f.size != arr.size:
        raise LengthMismatch("need one roof value per symbol")
    if f.size and f.min() < 1:
        raise ValueError("roof values must be positive")
    out = np.full(int(f.sum()), H, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(f)[:-1]]).astype(np.int64)
    out[starts] = arr
    return SymbolString(out)


def delete_filler(x: StringLike) -> SymbolString:
    arr = as_array(x)
    return SymbolString(arr[arr != H])


@dataclass(frozen=True)
class StationaryCode:
    """Sliding block code of width ``2K+1``."""

    half_width: int
    name: str
    rule: Callable[[tuple], int] = field(compare=False)

    def __call__(self, window: Sequence[int]) -> int:
        if len(window) != 2 * self.half_width + 1:
            raise ValueError("window has the wrong width")
        return int(self.rule(tuple(int(v) for v in window)))

    @classmethod
    def identity(cls) -> "StationaryCode":
        return cls(0, "identity", lambda w: w[0])

    @classmethod
    def permutation(cls, mapping: dict) -> "StationaryCode":
        m = {int(k): int(v) for k, v in mapping.items()}
        return cls(0, f"permutation{sorted(m.items())}", lambda w: m.get(w[0], w[0]))

    @classmethod
    def shift(cls, d: int) -> "StationaryCode":
        K = abs(int(d))
        return cls(K, f"shift({d})", lambda w: w[K + d])

    @classmethod
    def majority(cls, K: int) -> "StationaryCode":
        """Most frequent symbol in the window; ties go to the centre symbol."""

        def rule(w):
            counts = Counter(w)
            top = max(counts.values())
            if counts[w[K]] == top:
                return w[K]
            return min(v for v, c in counts.items() if c == top)

        return cls(K, f"majority({K})", rule)

    @classmethod
    def table(cls, K: int, table: dict) -> "StationaryCode":
        tab = {tuple(int(v) for v in k): int(v) for k, v in table.items()}

        def rule(w):
            if w not in tab:
                raise ValueError(f"code table has no entry for window {w}")
            return tab[w]

        return cls(K, "table", rule)


def apply_code(code: StationaryCode, x: StringLike) -> SymbolString:
    """Apply the code at every interior position; ``K`` symbols drop at each end."""
    arr = as_array(x)
    K = code.half_width
    if arr.size < 2 * K + 1:
        raise InputTooShort(f"need at least {2 * K + 1} symbols")
    vals = arr.tolist()
    out = [code(vals[l - K : l + K + 1]) for l in range(K, arr.size - K)]
    return SymbolString(np.array(out, dtype=np.int64))
