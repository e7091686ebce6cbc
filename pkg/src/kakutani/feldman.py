"""Feldman patterns.

Pattern ``j`` over building blocks ``A_1..A_N`` is
``(A_1^{T r_j} ... A_N^{T r_j})^{c_j}`` with the geometric schedule
``r_j = N^{2j}``, ``c_j = N^{2(M+1-j)}``.  Every pattern therefore has the
same length ``T N^{2M+3} L`` and uses each block ``T N^{2M+2}`` times.

A second schedule, ``divisor``, keeps the same shape but takes the run
multipliers from the ``M`` smallest divisors of the least integer with at
least ``M`` divisors.  It exists so that small construction experiments stay
tractable; the closed forms above refer to the geometric schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import fbar as fb
from .errors import BadIndex, HypothesisUnverifiable, PatternTooLarge, ShapeMismatch, WindowTooShort
from .reports import FAIL, PASS, VACUOUS, CheckReport
from .symbols import RleString, StringLike, SymbolString, as_array
from .words import StationaryCode, apply_code

DEFAULT_EXPAND_CAP = 1 << 26
SCHEDULES = ("geometric", "divisor")


@lru_cache(maxsize=None)
def divisor_base(M: int) -> int:
    """Least positive integer with at least ``M`` divisors."""
    c = 1
    while _num_divisors(c) < M:
        c += 1
    return c


def _num_divisors(c: int) -> int:
    return sum(1 for d in range(1, c + 1) if c % d == 0)


def run_schedule(N: int, M: int, schedule: str = "geometric") -> list[tuple[int, int]]:
    """``(r_j, c_j)`` for ``j = 1..M``: run multiplier and cycle count."""
    if schedule == "geometric":
        return [(N ** (2 * j), N ** (2 * (M + 1 - j))) for j in range(1, M + 1)]
    if schedule == "divisor":
        base = divisor_base(M)
        divs = [d for d in range(1, base + 1) if base % d == 0][:M]
        return [(d, base // d) for d in divs]
    raise ValueError(f"unknown schedule {schedule!r}")


def runs_per_pattern(N: int, M: int, schedule: str = "geometric") -> int:
    """Length of a pattern measured in ``T``-runs of blocks (``N r_j c_j``)."""
    r, c = run_schedule(N, M, schedule)[0]
    return N * r * c


@dataclass(frozen=True)
class FeldmanSpec:
    T: int
    N: int
    M: int
    blocks: tuple
    schedule: str = "geometric"

    def __post_init__(self):
        blocks = tuple(SymbolString.of(b) for b in self.blocks)
        if self.T < 1 or self.M < 1:
            raise ValueError("need T >= 1 and M >= 1")
        if self.N < 2 or len(blocks) != self.N:
            raise ValueError("need N >= 2 building blocks")
        lengths = {len(b) for b in blocks}
        if len(lengths) != 1 or 0 in lengths:
            raise ValueError("building blocks must be nonempty and share one length")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def with_symbols(cls, T: int, N: int, M: int, first: int = 1, schedule: str = "geometric") -> "FeldmanSpec":
        return cls(T, N, M, tuple(SymbolString.of([first + i]) for i in range(N)), schedule)

    @property
    def L(self) -> int:
        return len(self.blocks[0])

    def pattern_length(self) -> int:
        r, c = run_schedule(self.N, self.M, self.schedule)[0]
        return self.T * self.N * r * c * self.L

    def block_occurrences(self) -> int:
        r, c = run_schedule(self.N, self.M, self.schedule)[0]
        return self.T * r * c

    def cycle_count(self, j: int) -> int:
        self._check_index(j)
        return run_schedule(self.N, self.M, self.schedule)[j - 1][1]

    def run_length(self, j: int) -> int:
        """Consecutive copies of one block inside pattern ``j``."""
        self._check_index(j)
        return self.T * run_schedule(self.N, self.M, self.schedule)[j - 1][0]

    def _check_index(self, j: int) -> None:
        if not 1 <= j <= self.M:
            raise BadIndex(f"pattern index {j} outside 1..{self.M}")

    def fingerprint(self) -> dict:
        return {
            "T": self.T,
            "N": self.N,
            "M": self.M,
            "schedule": self.schedule,
            "blocks": [str(b) for b in self.blocks],
        }


# closed forms (geometric schedule)
def closed_form_length(T: int, N: int, M: int, L: int) -> int:
    return T * N ** (2 * M + 3) * L


def closed_form_occurrences(T: int, N: int, M: int) -> int:
    return T * N ** (2 * M + 2)


def closed_form_cycles(N: int, M: int, j: int) -> int:
    return N ** (2 * (M + 1 - j))


def feldman_pattern(
    spec: FeldmanSpec, j: int, output: str = "expanded", cap: int = DEFAULT_EXPAND_CAP
) -> SymbolString | RleString:
    spec._check_index(j)
    r, c = run_schedule(spec.N, spec.M, spec.schedule)[j - 1]
    run = spec.T * r
    if output == "rle":
        block_rles = [RleString.encode(b) for b in spec.blocks]
        cycle: list[tuple[int, int]] = []
        for br in block_rles:
            if len(br.counts) == 1:
                cycle.append((int(br.symbols[0]), int(br.counts[0]) * run))
            else:
                cycle.extend(br.runs * run)
        return RleString.from_runs(cycle * c)
    if output != "expanded":
        raise ValueError("output must be 'expanded' or 'rle'")
    if spec.pattern_length() > cap:
        raise PatternTooLarge(f"pattern length {spec.pattern_length()} exceeds cap {cap}")
    one_cycle = np.concatenate([np.tile(b.data, run) for b in spec.blocks])
    return SymbolString(np.tile(one_cycle, c))


def pattern_classes(tup: Sequence[int] | np.ndarray, T: int, r: int, c: int) -> np.ndarray:
    """Pattern over single-symbol blocks ``tup`` with run ``T r`` and ``c`` cycles."""
    return np.tile(np.repeat(np.asarray(tup, dtype=np.int64), T * r), c)


def count_accounting(spec: FeldmanSpec, j: int, cap: int = DEFAULT_EXPAND_CAP) -> dict:
    """Measured length, per-block occurrences and cycles of pattern ``j``."""
    pat = feldman_pattern(spec, j, "expanded", cap).data
    L = spec.L
    pieces = pat.reshape(-1, L)
    lookup = {b.data.tobytes(): i for i, b in enumerate(spec.blocks)}
    ids = np.array([lookup[p.tobytes()] for p in pieces], dtype=np.int64)
    occ = np.bincount(ids, minlength=spec.N)
    # a cycle ends wherever the block index wraps from N-1 back to 0
    changes = np.flatnonzero(ids[1:] != ids[:-1])
    wraps = int(np.count_nonzero((ids[changes] == spec.N - 1) & (ids[changes + 1] == 0)))
    return {"length": int(pat.size), "occurrences": occ.tolist(), "cycles": wraps + 1}


# --------------------------------------------------------------------------
# separation checks


def _window(x: RleString, window: tuple[int, int] | None) -> RleString:
    if window is None:
        return x
    return x.window(int(window[0]), int(window[1]))


def _exceeds_one_minus(value: Fraction, c: int, N: int) -> bool:
    """Whether ``value > 1 - c/sqrt(N)``, exactly."""
    gap = 1 - value
    return gap <= 0 or gap * gap * N < c * c


def verify_different_patterns(
    spec: FeldmanSpec,
    j: int,
    k: int,
    windows: tuple | None = None,
    mode: str = "explore",
    baseline: Fraction | None = None,
    backend: str = "rle",
) -> CheckReport:
    """f-bar between windows of patterns ``j`` and ``k``.

    In ``assert`` mode (``N >= 20``) the value must exceed ``1 - 4/sqrt(N)``
    and windows must be at least ``S N^{2M+2}`` long; otherwise the value is
    compared with ``baseline`` when one is given.
    """
    wa, wb = windows if windows is not None else (None, None)
    A = _window(feldman_pattern(spec, j, "rle"), wa)
    B = _window(feldman_pattern(spec, k, "rle"), wb)
    value = fb.fbar(A, B, backend=backend)
    params = {"spec": spec.fingerprint(), "j": j, "k": k, "windows": windows, "mode": mode}
    if mode == "assert" and spec.N >= 20:
        need = spec.T * spec.N ** (2 * spec.M + 2) * spec.L
        if min(len(A), len(B)) < need:
            raise WindowTooShort(f"windows must be at least {need} symbols")
        ok = _exceeds_one_minus(value, 4, spec.N)
        return CheckReport("Lemma-5.1", params, value, f"1 - 4/sqrt({spec.N})", PASS if ok else FAIL)
    if baseline is not None:
        ok = value == Fraction(baseline)
        return CheckReport("Lemma-5.1-log", params, value, Fraction(baseline), PASS if ok else FAIL)
    return CheckReport("Lemma-5.1-log", params, value, None, VACUOUS)


def verify_feldman_separation(
    spec: FeldmanSpec,
    alpha: Fraction,
    R: Fraction,
    j: int,
    k: int,
    windows: tuple | None = None,
    backend: str = "rle",
) -> CheckReport:
    """Check ``fbar >= alpha - 4/sqrt(N) - 1/R`` for windows of two patterns."""
    if j == k:
        raise ValueError("the separation check compares two different patterns")
    alpha, R = Fraction(alpha), Fraction(R)
    table = {i: b.data for i, b in enumerate(spec.blocks)}
    cert = fb.certify_cross_blocks(table, alpha, R)
    if cert["min"] < alpha:
        raise HypothesisUnverifiable(f"blocks reach f-bar {cert['min']} < alpha on long substrings")
    wa, wb = windows if windows is not None else (None, None)
    A = _window(feldman_pattern(spec, j, "rle"), wa)
    B = _window(feldman_pattern(spec, k, "rle"), wb)
    need = spec.T * spec.N ** (2 * spec.M + 2) * spec.L
    if spec.schedule == "geometric" and min(len(A), len(B)) < need:
        raise WindowTooShort(f"windows must be at least {need} symbols")
    value = fb.fbar(A, B, backend=backend)
    head = alpha - 1 / R  # bound = head - 4/sqrt(N)
    params = {"spec": spec.fingerprint(), "alpha": alpha, "R": R, "j": j, "k": k, "certification": cert["method"]}
    rhs = f"{head} - 4/sqrt({spec.N})"
    if head <= 0 or head * head * spec.N <= 16:
        return CheckReport("Prop-5.2", params, value, rhs, VACUOUS)
    deficit = head - value  # need deficit <= 4/sqrt(N)
    ok = deficit <= 0 or deficit * deficit * spec.N <= 16
    return CheckReport("Prop-5.2", params, value, rhs, PASS if ok else FAIL)


@dataclass(frozen=True)
class CodingInstance:
    """Strings ``A`` and ``B`` of the coding lemma, before windows are taken."""

    A: np.ndarray
    B: np.ndarray


def coding_lemma_strings(
    z: int,
    N: int,
    q: int,
    L: int,
    b_blocks: np.ndarray,
    a_blocks: np.ndarray,
    permutations: np.ndarray,
    code: StationaryCode | None = None,
) -> CodingInstance:
    """Assemble ``A`` (permuted ``A_{ij}`` rows) and ``B`` (the ``Upsilon_{im}``).

    ``b_blocks`` has shape ``(z, N, q, L)``, ``a_blocks`` ``(z, q, L)`` and
    ``permutations`` ``(z, N, q)``.  The optional code is applied to ``A``.
    """
    b_blocks = np.asarray(b_blocks, dtype=np.int64)
    a_blocks = np.asarray(a_blocks, dtype=np.int64)
    permutations = np.asarray(permutations, dtype=np.int64)
    if b_blocks.shape != (z, N, q, L) or a_blocks.shape != (z, q, L) or permutations.shape != (z, N, q):
        raise ShapeMismatch("block families do not have the declared shapes")
    for row in permutations.reshape(-1, q):
        if sorted(row.tolist()) != list(range(q)):
            raise ShapeMismatch("each Lambda must permute 0..q-1")
    A = np.concatenate([a_blocks[i][permutations[i, m]].ravel() for i in range(z) for m in range(N)])
    B = b_blocks.reshape(-1)
    if code is not None:
        A = apply_code(code, A).data
    return CodingInstance(A, B)


def coding_lemma_instance(
    z: int,
    N: int,
    q: int,
    L: int,
    b_blocks: np.ndarray,
    a_blocks: np.ndarray,
    permutations: np.ndarray,
    code: StationaryCode | None,
    R1: Fraction,
    R2: Fraction,
    alpha: Fraction,
    windows: tuple | None = None,
    baseline: Fraction | None = None,
) -> CheckReport:
    """Bound ``alpha (1/8 - 2/N^{1/4}) - 1/R1 - 4 R2/z`` for one instance."""
    alpha, R1, R2 = Fraction(alpha), Fraction(R1), Fraction(R2)
    inst = coding_lemma_strings(z, N, q, L, b_blocks, a_blocks, permutations, code)
    b_blocks = np.asarray(b_blocks, dtype=np.int64)
    # hypothesis: blocks with different m are far apart on long substrings
    families: dict[int, dict[bytes, np.ndarray]] = {}
    for i in range(z):
        for m in range(N):
            for j in range(q):
                families.setdefault(m, {})[b_blocks[i, m, j].tobytes()] = b_blocks[i, m, j]
    min_len = max(1, math.ceil(Fraction(L) / R1))
    worst = None
    for m1 in range(N):
        for m2 in range(m1 + 1, N):
            for x in families[m1].values():
                for y in families[m2].values():
                    for C in fb._substrings(x, min_len, 1):
                        for D in fb._substrings(y, min_len, 1):
                            v = fb.fbar(C, D)
                            worst = v if worst is None or v < worst else worst
    if worst is not None and worst < alpha:
        raise HypothesisUnverifiable(f"cross-family substrings reach f-bar {worst} < alpha")
    if windows is None:
        Abar, Bbar = inst.A, inst.B
    else:
        (sa, la), (sb, lb) = windows
        Abar, Bbar = inst.A[sa : sa + la], inst.B[sb : sb + lb]
    need = Fraction(z * q * N * L) / R2
    if min(Abar.size, Bbar.size) < need:
        raise WindowTooShort(f"windows must hold at least {need} symbols")
    value = fb.fbar(Abar, Bbar)
    head = alpha / 8 - 1 / R1 - 4 * R2 / z  # bound = head - 2 alpha / N^{1/4}
    params = {"z": z, "N": N, "q": q, "L": L, "R1": R1, "R2": R2, "alpha": alpha,
              "code": code.name if code else "none", "windows": windows}
    rhs = f"{head} - 2*{alpha}/N^(1/4)"
    if N <= 2**16 or head <= 0 or head**4 * N <= 16 * alpha**4:
        status = VACUOUS
        if baseline is not None and value != Fraction(baseline):
            status = FAIL
        return CheckReport("Lemma-5.3", params, value, rhs, status)
    deficit = head - value
    ok = deficit <= 0 or deficit**4 * N <= 16 * alpha**4
    return CheckReport("Lemma-5.3", params, value, rhs, PASS if ok else FAIL)
