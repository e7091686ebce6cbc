"""Hamming and f-bar distances between finite strings.

The f-bar distance is ``1 - 2*LCS(a, b)/(|a| + |b|)``.  Four interchangeable
LCS backends are provided: subset enumeration (``bruteforce``), the classical
quadratic table (``dp``), a 64-lane bit-vector recurrence (``bitparallel``) and
a block recurrence over run grids (``rle``).  All return integers; the
rational value is assembled outside the kernels.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from numba import njit

from . import prng
from .errors import (
    BackendCapacityExceeded,
    EmptyInput,
    HypothesisUnverifiable,
    LengthMismatch,
    WindowOutOfBounds,
)
from .reports import FAIL, PASS, CheckReport
from .symbols import H, RleString, StringLike, as_array

BACKENDS = ("bruteforce", "dp", "bitparallel", "rle")
BRUTEFORCE_CAP = 16

_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_ALL = np.uint64(0xFFFFFFFFFFFFFFFF)


# --------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _lcs_dp(a, b):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        ai = a[i - 1]
        cur[0] = 0
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                x = prev[j]
                y = cur[j - 1]
                cur[j] = x if x > y else y
        prev, cur = cur, prev
    return prev[m]


@njit(cache=True)
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return np.int64((x * np.uint64(0x0101010101010101)) >> np.uint64(56))


@njit(cache=True)
def _lcs_bitparallel(a, b, sigma):
    """Bit-vector LCS; ``a`` and ``b`` hold dense codes in ``[0, sigma)``."""
    n = a.shape[0]
    words = (n + 63) // 64
    pm = np.zeros((sigma, words), dtype=np.uint64)
    for i in range(n):
        pm[a[i], i // 64] |= np.uint64(1) << np.uint64(i % 64)
    v = np.empty(words, dtype=np.uint64)
    for w in range(words):
        v[w] = np.uint64(0xFFFFFFFFFFFFFFFF)
    rem = n % 64
    last_mask = np.uint64(0xFFFFFFFFFFFFFFFF)
    if rem:
        last_mask = (np.uint64(1) << np.uint64(rem)) - np.uint64(1)
    v[words - 1] &= last_mask
    for j in range(b.shape[0]):
        row = pm[b[j]]
        carry = np.uint64(0)
        for w in range(words):
            vw = v[w]
            u = vw & row[w]
            s = vw + u
            c1 = np.uint64(1) if s < vw else np.uint64(0)
            s2 = s + carry
            c2 = np.uint64(1) if s2 < s else np.uint64(0)
            carry = c1 | c2
            v[w] = s2 | (vw & ~u)
        v[words - 1] &= last_mask
    zeros = 0
    for w in range(words):
        zeros += _popcount64(v[w])
    return n - zeros


@njit(cache=True)
def _lcs_rle(asym, acnt, bsym, bcnt):
    """LCS over run grids: only block boundaries of the table are evaluated."""
    m = 0
    for j in range(bcnt.shape[0]):
        m += bcnt[j]
    top = np.zeros(m + 1, dtype=np.int64)
    new = np.zeros(m + 1, dtype=np.int64)
    for i in range(asym.shape[0]):
        p = acnt[i]
        left = np.zeros(p + 1, dtype=np.int64)
        right = np.zeros(p + 1, dtype=np.int64)
        new[0] = 0
        y0 = 0
        for j in range(bsym.shape[0]):
            q = bcnt[j]
            if asym[i] != bsym[j]:
                lp = left[p]
                for y in range(1, q + 1):
                    t = top[y0 + y]
                    new[y0 + y] = t if t > lp else lp
                tq = top[y0 + q]
                for x in range(p + 1):
                    lx = left[x]
                    right[x] = lx if lx > tq else tq
            else:
                for y in range(1, q + 1):
                    if y >= p:
                        from_top = top[y0 + y - p] + p
                    else:
                        from_top = top[y0] + y
                    if p >= y:
                        from_left = left[p - y] + y
                    else:
                        from_left = left[0] + p
                    new[y0 + y] = from_top if from_top > from_left else from_left
                for x in range(p + 1):
                    if q >= x:
                        from_top = top[y0 + q - x] + x
                    else:
                        from_top = top[y0] + q
                    if x >= q:
                        from_left = left[x - q] + q
                    else:
                        from_left = left[0] + x
                    right[x] = from_top if from_top > from_left else from_left
            left, right = right, left
            y0 += q
        top, new = new, top
    return top[m]


@njit(cache=True)
def _is_subsequence_masked(a, mask, b):
    j = 0
    m = b.shape[0]
    for i in range(a.shape[0]):
        if (mask >> i) & 1:
            while j < m and b[j] != a[i]:
                j += 1
            if j == m:
                return False
            j += 1
    return True


@njit(cache=True)
def _lcs_brute(a, b, masks, sizes):
    """Largest subset of ``a`` (masks sorted by size, descending) that embeds in ``b``."""
    for t in range(masks.shape[0]):
        if _is_subsequence_masked(a, masks[t], b):
            return sizes[t]
    return 0


@lru_cache(maxsize=None)
def _masks_desc(n: int) -> tuple[np.ndarray, np.ndarray]:
    masks = np.arange(1 << n, dtype=np.int64)
    sizes = np.array([bin(x).count("1") for x in range(1 << n)], dtype=np.int64)
    order = np.lexsort((masks, -sizes))
    return masks[order], sizes[order]


@njit(cache=True)
def _rle_encode(x, sym, cnt):
    r = 0
    for i in range(x.shape[0]):
        if r > 0 and sym[r - 1] == x[i]:
            cnt[r - 1] += 1
        else:
            sym[r] = x[i]
            cnt[r] = 1
            r += 1
    return r


# --------------------------------------------------------------------------
# public API


def _check_nonempty(a: np.ndarray, b: np.ndarray) -> None:
    if a.size == 0 or b.size == 0:
        raise EmptyInput("f-bar needs two nonempty strings")


def _dense_codes(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    values, inv = np.unique(np.concatenate([a, b]), return_inverse=True)
    inv = inv.astype(np.int64)
    return inv[: a.size], inv[a.size :], int(values.size)


def _as_rle(x) -> RleString:
    return x if isinstance(x, RleString) else RleString.encode(x)


def maxmatch(a: StringLike | RleString, b: StringLike | RleString, backend: str = "auto") -> int:
    """Maximum cardinality of a match between ``a`` and ``b`` (the LCS length)."""
    if backend == "auto":
        backend = _auto_backend(a, b)
    if backend == "rle":
        ra, rb = _as_rle(a), _as_rle(b)
        if len(ra) == 0 or len(rb) == 0:
            raise EmptyInput("f-bar needs two nonempty strings")
        return int(_lcs_rle(ra.symbols, ra.counts, rb.symbols, rb.counts))
    xa = a.expand().data if isinstance(a, RleString) else as_array(a)
    xb = b.expand().data if isinstance(b, RleString) else as_array(b)
    _check_nonempty(xa, xb)
    if backend == "dp":
        return int(_lcs_dp(xa, xb))
    if backend == "bitparallel":
        ca, cb, sigma = _dense_codes(xa, xb)
        if ca.size > cb.size:
            ca, cb = cb, ca
        return int(_lcs_bitparallel(ca, cb, sigma))
    if backend == "bruteforce":
        if xa.size + xb.size > BRUTEFORCE_CAP:
            raise BackendCapacityExceeded(
                f"bruteforce handles |a|+|b| <= {BRUTEFORCE_CAP}, got {xa.size + xb.size}"
            )
        if xa.size > xb.size:
            xa, xb = xb, xa
        masks, sizes = _masks_desc(int(xa.size))
        return int(_lcs_brute(xa, xb, masks, sizes))
    raise ValueError(f"unknown backend {backend!r}")


def _auto_backend(a, b) -> str:
    if isinstance(a, RleString) or isinstance(b, RleString):
        ra, rb = _as_rle(a), _as_rle(b)
        if len(ra.counts) * len(rb) + len(rb.counts) * len(ra) < len(ra) * len(rb) // 64:
            return "rle"
        return "bitparallel"
    return "bitparallel"


def fbar(a: StringLike | RleString, b: StringLike | RleString, backend: str = "auto") -> Fraction:
    """Exact f-bar distance ``1 - 2*maxmatch/(|a|+|b|)``."""
    total = len(a) if isinstance(a, RleString) else as_array(a).size
    total += len(b) if isinstance(b, RleString) else as_array(b).size
    mm = maxmatch(a, b, backend)
    return 1 - Fraction(2 * mm, total)


def dbar(a: StringLike, b: StringLike) -> Fraction:
    """Normalised Hamming distance between equal-length strings."""
    xa, xb = as_array(a), as_array(b)
    if xa.size != xb.size:
        raise LengthMismatch(f"lengths {xa.size} and {xb.size} differ")
    if xa.size == 0:
        raise EmptyInput("d-bar of empty strings")
    return Fraction(int(np.count_nonzero(xa != xb)), int(xa.size))


@njit(cache=True)
def _suffix_table(a, b):
    n = a.shape[0]
    m = b.shape[0]
    s = np.zeros((n + 1, m + 1), dtype=np.int32)
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                s[i, j] = s[i + 1, j + 1] + 1
            else:
                x = s[i + 1, j]
                y = s[i, j + 1]
                s[i, j] = x if x > y else y
    return s


@njit(cache=True)
def _least_match(a, b, s):
    n = a.shape[0]
    m = b.shape[0]
    need = s[0, 0]
    out = np.empty((need, 2), dtype=np.int64)
    i0 = 0
    j0 = 0
    for t in range(need):
        r = need - t
        found = False
        for i in range(i0, n):
            if s[i, j0] < r:
                break
            for j in range(j0, m):
                if s[i, j] < r:
                    break
                if a[i] == b[j] and s[i + 1, j + 1] == r - 1:
                    out[t, 0] = i
                    out[t, 1] = j
                    i0 = i + 1
                    j0 = j + 1
                    found = True
                    break
            if found:
                break
    return out


def best_match(a: StringLike, b: StringLike) -> list[tuple[int, int]]:
    """A maximum match; among all of them the lexicographically least pair list."""
    xa, xb = as_array(a), as_array(b)
    _check_nonempty(xa, xb)
    table = _suffix_table(xa, xb)
    pairs = _least_match(xa, xb, table)
    return [(int(i), int(j)) for i, j in pairs]


def is_match(a: StringLike, b: StringLike, pairs: Sequence[tuple[int, int]]) -> bool:
    xa, xb = as_array(a), as_array(b)
    last_i = last_j = -1
    for i, j in pairs:
        if i <= last_i or j <= last_j or xa[i] != xb[j]:
            return False
        last_i, last_j = i, j
    return True


def fbar_infinite_window(
    a: StringLike, b: StringLike, center_a: int, center_b: int, radii: Sequence[int]
) -> list[Fraction]:
    """f-bar of the centred windows of length ``2r+1`` for each radius."""
    xa, xb = as_array(a), as_array(b)
    out = []
    for r in radii:
        if r <= 0:
            raise WindowOutOfBounds(f"radius must be positive, got {r}")
        if center_a - r < 0 or center_a + r >= xa.size or center_b - r < 0 or center_b + r >= xb.size:
            raise WindowOutOfBounds(f"radius {r} leaves the strings")
        out.append(fbar(xa[center_a - r : center_a + r + 1], xb[center_b - r : center_b + r + 1]))
    return out


# --------------------------------------------------------------------------
# batch kernels used by the equivalence sweeps


@njit(cache=True)
def _all_backends(a, b, sigma, masks, sizes, buf_sym_a, buf_cnt_a, buf_sym_b, buf_cnt_b):
    """Return the four LCS values (brute, dp, bitparallel, rle)."""
    if a.shape[0] <= b.shape[0]:
        brute = _lcs_brute(a, b, masks[a.shape[0]], sizes[a.shape[0]])
    else:
        brute = _lcs_brute(b, a, masks[b.shape[0]], sizes[b.shape[0]])
    dp = _lcs_dp(a, b)
    bp = _lcs_bitparallel(a, b, sigma)
    ra = _rle_encode(a, buf_sym_a, buf_cnt_a)
    rb = _rle_encode(b, buf_sym_b, buf_cnt_b)
    rl = _lcs_rle(buf_sym_a[:ra], buf_cnt_a[:ra], buf_sym_b[:rb], buf_cnt_b[:rb])
    return brute, dp, bp, rl


def _mask_tables(max_short: int) -> tuple[list, list]:
    from numba.typed import List

    masks, sizes = List(), List()
    for n in range(max_short + 1):
        mk, sz = _masks_desc(n)
        masks.append(mk)
        sizes.append(sz)
    return masks, sizes


@njit(cache=True)
def _sweep_length(total, sigma, canonical, masks, sizes):
    """All pairs (a, b) with |a|+|b| = total, |a|,|b| >= 1, over ``sigma`` letters.

    With ``canonical`` only strings whose concatenation lists letters in order of
    first appearance are visited (one representative per letter relabelling).
    Returns (pairs checked, mismatches, first mismatching string, split).
    """
    s = np.zeros(total, dtype=np.int64)
    buf = np.zeros((4, total), dtype=np.int64)
    checked = 0
    bad = 0
    bad_s = np.full(total, -1, dtype=np.int64)
    bad_split = -1
    count = 1
    for _ in range(total):
        count *= sigma
    for code in range(count):
        c = code
        for i in range(total):
            s[i] = c % sigma
            c //= sigma
        if canonical:
            ok = True
            hi = -1
            for i in range(total):
                if s[i] > hi + 1:
                    ok = False
                    break
                if s[i] > hi:
                    hi = s[i]
            if not ok:
                continue
        for split in range(1, total):
            a = s[:split]
            b = s[split:]
            r = _all_backends(a, b, sigma, masks, sizes, buf[0], buf[1], buf[2], buf[3])
            checked += 1
            if r[0] != r[1] or r[0] != r[2] or r[0] != r[3]:
                if bad == 0:
                    bad_s[:] = s
                    bad_split = split
                bad += 1
    return checked, bad, bad_s, bad_split


def exhaustive_sweep(max_total: int, sigma: int = 3, canonical: bool = True) -> dict:
    """Compare all four backends on every pair with ``|a|+|b| <= max_total``."""
    masks, sizes = _mask_tables(max_total)
    checked = bad = 0
    first = None
    for total in range(2, max_total + 1):
        c, nb, bs, split = _sweep_length(total, sigma, canonical, masks, sizes)
        checked += int(c)
        if nb and first is None:
            first = (bs[:split].tolist(), bs[split:].tolist())
        bad += int(nb)
    return {"pairs": checked, "mismatches": bad, "first_mismatch": first}


def all_backend_values(a: StringLike, b: StringLike) -> dict[str, Fraction]:
    return {name: fbar(a, b, backend=name) for name in BACKENDS}


# --------------------------------------------------------------------------
# randomized checks of the elementary facts


def _random_string(gen: np.random.Generator, n: int, alphabet: int) -> np.ndarray:
    return gen.integers(1, alphabet + 1, size=n).astype(np.int64)


def _fact_deletion(gen, max_len, alphabet) -> tuple[bool, dict]:
    n, m = (int(v) for v in gen.integers(2, max_len + 1, size=2))
    a, b = _random_string(gen, n, alphabet), _random_string(gen, m, alphabet)
    gamma = Fraction(int(gen.integers(1, 20)), 20)
    budget = (gamma * (n + m)).__floor__()
    base = fbar(a, b)
    # plain deletion, bound with 2*gamma
    da = int(gen.integers(0, min(budget, n - 1) + 1))
    db = int(gen.integers(0, min(budget - da, m - 1) + 1))
    keep_a = np.sort(gen.choice(n, n - da, replace=False))
    keep_b = np.sort(gen.choice(m, m - db, replace=False))
    ta, tb = a[keep_a], b[keep_b]
    ok1 = base >= fbar(ta, tb) - 2 * gamma
    # deletion compatible with a best match: drop whole matched pairs or unmatched terms
    pairs = best_match(a, b)
    matched_a = {i for i, _ in pairs}
    matched_b = {j for _, j in pairs}
    cand = [("p", t) for t in range(len(pairs))]
    cand += [("a", i) for i in range(n) if i not in matched_a]
    cand += [("b", j) for j in range(m) if j not in matched_b]
    order = gen.permutation(len(cand))
    drop_a: set[int] = set()
    drop_b: set[int] = set()
    used = 0
    for k in order:
        kind, t = cand[k]
        cost = 2 if kind == "p" else 1
        if used + cost > budget:
            continue
        if gen.random() < 0.5:
            continue
        if kind == "p":
            i, j = pairs[t]
            if len(drop_a) + 1 >= n or len(drop_b) + 1 >= m:
                continue
            drop_a.add(i)
            drop_b.add(j)
        elif kind == "a":
            if len(drop_a) + 1 >= n:
                continue
            drop_a.add(t)
        else:
            if len(drop_b) + 1 >= m:
                continue
            drop_b.add(t)
        used += cost
    ua = a[[i for i in range(n) if i not in drop_a]]
    ub = b[[j for j in range(m) if j not in drop_b]]
    ok2 = base >= fbar(ua, ub) - gamma
    # insertion of arbitrary symbols, bound with gamma
    ins = int(gen.integers(0, budget + 1))
    xa, xb = list(a), list(b)
    for _ in range(ins):
        target = xa if gen.random() < 0.5 else xb
        target.insert(int(gen.integers(0, len(target) + 1)), int(gen.integers(1, alphabet + 1)))
    ok3 = base >= fbar(np.array(xa), np.array(xb)) - gamma
    info = {"a": a.tolist(), "b": b.tolist(), "gamma": gamma, "deleted": (da, db), "inserted": ins}
    return ok1 and ok2 and ok3, info


def _fact_decomposition(gen, max_len, alphabet) -> tuple[bool, dict]:
    while True:
        n, m = (int(v) for v in gen.integers(2, max_len + 1, size=2))
        x, y = _random_string(gen, n, alphabet), _random_string(gen, m, alphabet)
        pairs = best_match(x, y)
        if pairs:
            break
    k = len(pairs)
    pieces = int(gen.integers(1, k + 1))
    cuts = sorted(gen.choice(np.arange(1, k), pieces - 1, replace=False).tolist()) if pieces > 1 else []
    xc, yc = [0], [0]
    for c in cuts:
        (i0, j0), (i1, j1) = pairs[c - 1], pairs[c]
        xc.append(int(gen.integers(i0 + 1, i1 + 1)))
        yc.append(int(gen.integers(j0 + 1, j1 + 1)))
    xc.append(n)
    yc.append(m)
    total = Fraction(0)
    for t in range(len(xc) - 1):
        xs, ys = x[xc[t] : xc[t + 1]], y[yc[t] : yc[t + 1]]
        weight = Fraction(xs.size + ys.size, n + m)
        total += fbar(xs, ys) * weight
    ok = total == fbar(x, y)
    return ok, {"x": x.tolist(), "y": y.tolist(), "x_cuts": xc, "y_cuts": yc, "sum": total}


def _fact_length(gen, max_len, alphabet) -> tuple[bool, dict]:
    n, m = (int(v) for v in gen.integers(1, max_len + 1, size=2))
    x, y = _random_string(gen, n, alphabet), _random_string(gen, m, alphabet)
    value = fbar(x, y)
    if value >= 1:
        # the hypothesis needs gamma < 1; fall back to the x = y instance
        y = x.copy()
        m = n
        value = Fraction(0)
    gamma = value + (1 - value) * Fraction(int(gen.integers(0, 10)), 10)
    ok = (1 - gamma) / (1 + gamma) * n <= m <= (1 + gamma) / (1 - gamma) * n
    return ok, {"x": x.tolist(), "y": y.tolist(), "gamma": gamma}


def _fact_filler(gen, max_len, alphabet) -> tuple[bool, dict]:
    n, m = (int(v) for v in gen.integers(1, max_len + 1, size=2))
    a, b = _random_string(gen, n, alphabet), _random_string(gen, m, alphabet)
    beta = 1 + Fraction(int(gen.integers(0, 16)), 8)
    ia = int(gen.integers(0, ((beta - 1) * n).__floor__() + 1))
    ib = int(gen.integers(0, ((beta - 1) * m).__floor__() + 1))
    xa, xb = list(a), list(b)
    for _ in range(ia):
        xa.insert(int(gen.integers(0, len(xa) + 1)), H)
    for _ in range(ib):
        xb.insert(int(gen.integers(0, len(xb) + 1)), H)
    ok = fbar(np.array(xa), np.array(xb)) >= fbar(a, b) / beta
    return ok, {"a": a.tolist(), "b": b.tolist(), "beta": beta, "inserted": (ia, ib)}


FACTS = {
    "Fact-2.2": _fact_deletion,
    "Fact-2.3": _fact_decomposition,
    "Fact-2.4": _fact_length,
    "Fact-2.5": _fact_filler,
}


def verify_fact_suite(trials: int, seed: int, max_len: int = 10, alphabet_size: int = 3) -> CheckReport:
    """Random instances of each elementary f-bar fact, checked exactly."""
    counts = {}
    failures = []
    for name, fn in FACTS.items():
        gen = prng.rng(seed, name)
        passed = 0
        for t in range(trials):
            ok, info = fn(gen, max_len, alphabet_size)
            if ok:
                passed += 1
            else:
                failures.append({"fact": name, "trial": t, **info})
        counts[name] = passed
    return CheckReport(
        check_id="Facts-2.2-2.5",
        params={"trials": trials, "seed": seed, "max_len": max_len, "alphabet_size": alphabet_size},
        lhs=counts,
        rhs={name: trials for name in FACTS},
        status=PASS if not failures else FAIL,
        witness=failures[0] if failures else None,
        details=failures,
    )


# --------------------------------------------------------------------------
# symbol-by-block replacement


def _substrings(block: np.ndarray, min_len: int, stride: int):
    n = block.size
    for start in range(0, n - min_len + 1, stride):
        for end in range(start + min_len, n + 1, stride):
            yield block[start:end]
        if (n - start - min_len) % stride:
            yield block[start:n]


def certify_cross_blocks(blocks: dict, alpha: Fraction, R: Fraction) -> dict:
    """Minimum f-bar over cross-label substrings of length >= L/R.

    Exhaustive when L/R <= 64, otherwise every 8th start and end.  Returns the
    minimum found, the method and a witness.
    """
    labels = sorted(blocks)
    L = len(next(iter(blocks.values())))
    min_len = -((-L * R.denominator) // R.numerator) if isinstance(R, Fraction) else -(-L // R)
    min_len = max(1, int(min_len))
    stride = 1 if Fraction(L) / R <= 64 else 8
    best = None
    witness = None
    for x in range(len(labels)):
        for y in range(x + 1, len(labels)):
            A = as_array(blocks[labels[x]])
            Bk = as_array(blocks[labels[y]])
            subs_b = list(_substrings(Bk, min_len, stride))
            for C in _substrings(A, min_len, stride):
                for D in subs_b:
                    v = fbar(C, D)
                    if best is None or v < best:
                        best = v
                        witness = (labels[x], labels[y], C.tolist(), D.tolist())
    return {
        "min": best if best is not None else Fraction(1),
        "method": "exhaustive" if stride == 1 else "stride-8",
        "min_len": min_len,
        "witness": witness,
    }


def verify_block_replacement(
    blocks_a: Sequence,
    blocks_b: Sequence,
    alpha: Fraction,
    R: Fraction,
) -> CheckReport:
    """Check the block replacement inequality on labelled block sequences.

    ``blocks_a`` and ``blocks_b`` are sequences of ``(label, block)`` pairs.
    The hypothesis is certified on the blocks that occur; the conclusion is
    ``fbar(A_seq, B_seq) > alpha * fbar(labels_a, labels_b) - 1/R``.
    """
    alpha, R = Fraction(alpha), Fraction(R)
    if not (0 < alpha < Fraction(1, 7)) or R < 2:
        raise HypothesisUnverifiable("need alpha in (0, 1/7) and R >= 2")
    table: dict = {}
    for label, block in list(blocks_a) + list(blocks_b):
        arr = as_array(block)
        if label in table and not np.array_equal(table[label], arr):
            raise HypothesisUnverifiable(f"label {label!r} carries two different blocks")
        table[label] = arr
    lengths = {arr.size for arr in table.values()}
    if len(lengths) != 1:
        raise HypothesisUnverifiable("blocks must share one length")
    cert = certify_cross_blocks(table, alpha, R)
    if cert["min"] < alpha:
        raise HypothesisUnverifiable(
            f"cross-label substrings reach f-bar {cert['min']} < alpha ({cert['method']})"
        )
    codes = {label: k for k, label in enumerate(sorted(table, key=str))}
    la = np.array([codes[l] for l, _ in blocks_a], dtype=np.int64)
    lb = np.array([codes[l] for l, _ in blocks_b], dtype=np.int64)
    sa = np.concatenate([as_array(b) for _, b in blocks_a])
    sb = np.concatenate([as_array(b) for _, b in blocks_b])
    lhs = fbar(sa, sb)
    rhs = alpha * fbar(la, lb) - 1 / R
    return CheckReport(
        check_id="Lemma-block-replacement",
        params={"alpha": alpha, "R": R, "L": lengths.pop(), "certification": cert["method"]},
        lhs=lhs,
        rhs=rhs,
        status=PASS if lhs > rhs else FAIL,
        witness=None if lhs > rhs else {"a": sa.tolist(), "b": sb.tolist()},
    )
