"""Substitution steps and the tree-indexed construction of word sets.

A stage ``n`` with predecessor ``m`` (the previous tree index) builds ``W_n``
as index strings over ``W_m``.  The building runs a chain of substitution
steps, one per level of the equivalence relations of ``W_m``; each step
replaces units of a class string by Feldman patterns over tuples of finer
classes and closes the result under the skew-diagonal group action.

Case 1 (``s(n) = s(m)``) runs one chain.  Case 2 (``s(n) = s(m) + 1``) runs
two chains, ``W_dd`` and ``W_d``, and interleaves their words with ``*``.

Toy mode picks small parameters so that every structural property can be
verified exhaustively; the analytic inequalities that toy parameters cannot
meet are reported, not enforced.  Faithful mode computes the parameters the
inequalities demand and refuses with a size report.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from typing import Callable, Sequence

import numpy as np
from numba import njit

from . import fbar as fb
from .errors import (
    ConfigInvalid,
    DivisibilityViolation,
    FaithfulInfeasible,
    InvariantViolation,
    LedgerInconsistent,
    OrbitClosureFailure,
    SpecViolation,
)
from .feldman import divisor_base, pattern_classes, run_schedule
from .reports import FAIL, PASS, VACUOUS, CheckReport, jsonable, status_of
from .symbols import SymbolString, StringLike, as_array
from .trees import (
    GroupActionTable,
    Node,
    TreeTrunc,
    check_subordinate,
    extend_action,
    group,
    is_odd,
    mask_image,
    parent,
    rho_masks,
    s_of_n,
    sigma,
)
from .words import LabeledWordSet, base_alphabet

MODES = ("toy", "faithful")
FULL_ALPHABET = 1 << 12
EXPANSION_CAP_LOG2 = 26


# --------------------------------------------------------------------------
# row lookup


_RB = np.uint64(0x100000001B3)
_RS = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True)
def _row_hash_kernel(rows):
    n, k = rows.shape
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        acc = np.uint64(k)
        for j in range(k):
            acc = acc * _RB + np.uint64(rows[i, j]) + _RS
        out[i] = acc
    return out


def _row_hashes(rows: np.ndarray) -> np.ndarray:
    return _row_hash_kernel(np.ascontiguousarray(rows, dtype=np.int64))


class RowIndex:
    """Exact lookup of rows of a 2-d integer array (hash, then compare)."""

    def __init__(self, rows: np.ndarray):
        self.rows = rows
        self._map: dict[int, list[int]] = {}
        for i, h in enumerate(_row_hashes(rows).tolist()):
            self._map.setdefault(h, []).append(i)

    def find_many(self, queries: np.ndarray) -> np.ndarray:
        out = np.full(queries.shape[0], -1, dtype=np.int64)
        for q, h in enumerate(_row_hashes(queries).tolist()):
            for i in self._map.get(h, ()):
                if np.array_equal(self.rows[i], queries[q]):
                    out[q] = i
                    break
        return out

    def find(self, row: np.ndarray) -> int:
        return int(self.find_many(row[None, :])[0])


def _skew(tab: np.ndarray, odd: bool, rows: np.ndarray) -> np.ndarray:
    out = tab[rows]
    return np.ascontiguousarray(out[..., ::-1]) if odd else out


def _dedupe_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows in first-appearance order and the label of every input row."""
    labels = np.empty(rows.shape[0], dtype=np.int64)
    keep: list[int] = []
    seen: dict[int, list[int]] = {}
    for i, h in enumerate(_row_hashes(rows).tolist()):
        hit = -1
        for j in seen.get(h, ()):
            if np.array_equal(rows[keep[j]], rows[i]):
                hit = j
                break
        if hit < 0:
            hit = len(keep)
            keep.append(i)
            seen.setdefault(h, []).append(hit)
        labels[i] = hit
    return rows[keep], labels


def first_appearance(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Relabel so that labels appear as 0, 1, 2, ... in list order.

    Returns ``(new_labels, order)`` with ``order[new] = old``.
    """
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    inv = np.empty(int(labels.max()) + 1, dtype=np.int64)
    inv[order] = np.arange(order.size)
    return inv[labels], order


# --------------------------------------------------------------------------
# the * interleaving


def star_interleave(v1: StringLike | np.ndarray, v2: StringLike | np.ndarray, J: int) -> np.ndarray | SymbolString:
    """``v2_1 v1_1 v2_2 v2_3 v1_2 v2_4 ... v2_{2J-1} v1_J v2_{2J}``."""
    symbolic = isinstance(v1, (SymbolString, str)) or isinstance(v2, (SymbolString, str))
    a = np.asarray(v1.data if isinstance(v1, SymbolString) else as_array(v1) if not isinstance(v1, np.ndarray) else v1)
    b = np.asarray(v2.data if isinstance(v2, SymbolString) else as_array(v2) if not isinstance(v2, np.ndarray) else v2)
    if J < 1 or a.shape[-1] % J or b.shape[-1] % (2 * J):
        raise DivisibilityViolation(f"|v1|={a.shape[-1]} must be divisible by J={J} and |v2|={b.shape[-1]} by 2J")
    lead = a.shape[:-1]
    a3 = a.reshape(*lead, J, a.shape[-1] // J)
    b3 = b.reshape(*lead, J, 2, b.shape[-1] // (2 * J))
    out = np.concatenate([b3[..., 0, :], a3, b3[..., 1, :]], axis=-1).reshape(*lead, -1)
    return SymbolString(out) if symbolic else out


def deinterleave(x: StringLike | np.ndarray, len1: int, J: int) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(x.data if isinstance(x, SymbolString) else x if isinstance(x, np.ndarray) else as_array(x))
    len2 = arr.shape[-1] - len1
    if J < 1 or len1 % J or len2 < 0 or len2 % (2 * J):
        raise DivisibilityViolation("lengths do not fit a J-fold interleaving")
    a, b = len1 // J, len2 // (2 * J)
    seg = arr.reshape(*arr.shape[:-1], J, a + 2 * b)
    v1 = seg[..., b : b + a].reshape(*arr.shape[:-1], -1)
    v2 = np.concatenate([seg[..., :b], seg[..., b + a :]], axis=-1).reshape(*arr.shape[:-1], -1)
    return v1, v2


# --------------------------------------------------------------------------
# the substitution step


@dataclass
class SubstitutionInput:
    """One substitution step ``P -> R`` on a collection ``omega`` of P-class strings.

    ``r_to_p`` maps R-labels onto the P-labels they refine; ``rho`` gives the
    mask in ``g_action`` of each generator of ``h_action``.  Units of length
    ``T2 * B * C`` (``C`` the pattern length in runs) are replaced by patterns
    drawn from ``schedule``.  ``allocation`` chooses the pattern sequences:
    ``consecutive`` gives each (transversal element, instance) its own
    contiguous range after ``pattern_offset``; ``digits`` reads the binary
    digits of the instance number.
    """

    omega: np.ndarray
    r_to_p: np.ndarray
    g_action: GroupActionTable
    h_action: GroupActionTable
    rho: Sequence[int]
    K: int
    T2: int
    schedule: Sequence[tuple[int, int]]
    allocation: str = "consecutive"
    pattern_offset: int = 0
    R_tilde: Fraction = Fraction(2)
    e: int = 1
    mode: str = "toy"

    def __post_init__(self):
        self.omega = np.ascontiguousarray(np.asarray(self.omega, dtype=np.int64))
        if self.omega.ndim == 1:
            self.omega = self.omega[None, :]
        self.r_to_p = np.asarray(self.r_to_p, dtype=np.int64)
        self.rho = [int(x) for x in self.rho]
        self.schedule = [(int(r), int(c)) for r, c in self.schedule]

    @property
    def n_p(self) -> int:
        return self.g_action.domain_size

    @property
    def n_r(self) -> int:
        return self.h_action.domain_size

    @property
    def M(self) -> int:
        return len(self.schedule)

    @property
    def h0(self) -> list[int]:
        return [mask for mask in range(self.h_action.order) if mask_image(mask, self.rho) == 0]

    @property
    def t(self) -> int:
        return len(self.h0).bit_length() - 1

    @property
    def B(self) -> int:
        return self.n_r // (self.n_p << self.t)

    @property
    def C(self) -> int:
        r, c = self.schedule[0]
        return r * c

    @property
    def T1(self) -> int:
        return self.T2 * self.B * self.C

    @property
    def k(self) -> int:
        return int(self.omega.shape[1])

    @property
    def units(self) -> int:
        return self.k // self.T1

    def validate(self) -> list[str]:
        """Raise on a structural invariant; return the analytic ones that fail."""
        if self.n_r % self.n_p or np.bincount(self.r_to_p, minlength=self.n_p).min() != self.n_r // self.n_p:
            raise InvariantViolation("R-classes do not split the P-classes evenly")
        if self.n_r != self.n_p * len(self.h0) * self.B:
            raise InvariantViolation("kernel size 2^t does not divide the R-classes per P-class")
        if any(r * c != self.C for r, c in self.schedule) or len({r for r, _ in self.schedule}) != self.M:
            raise InvariantViolation("pattern schedule must have distinct runs and a common length")
        if self.k % self.T1:
            raise InvariantViolation(f"k={self.k} is not a multiple of T1={self.T1}")
        if self.units % self.n_p or (self.units // self.n_p) % (1 << self.t):
            raise InvariantViolation("units per P-class must be a multiple of 2^t")
        counts = np.stack([np.bincount(w, minlength=self.n_p) for w in self.omega])
        if (counts != self.k // self.n_p).any():
            raise InvariantViolation("some P-class does not occur exactly k/N times")
        if self.allocation == "digits" and self.M > 1 and self.K > (1 << self.units):
            raise InvariantViolation("too few units to give K distinct digit sequences")
        analytic = []
        if self.units < 2 * self.R_tilde ** 2:
            analytic.append("U1 >= 2 R~^2")
        if self.allocation != "consecutive":
            analytic.append("M2 >= K P U1 2^(nu(2M1+3)) (patterns reused across the transversal)")
        if self.e < max(2, self.t):
            analytic.append("e >= max(2, t)")
        return analytic


@dataclass
class SubstitutionResult:
    omega_prime: np.ndarray
    provenance: list  # (omega index, instance j, h mask) per element
    upsilon: list
    tuples: np.ndarray  # [P-class, u, slot] -> R-label
    patterns_used: int
    analytic_failures: list = field(default_factory=list)


def tuple_partition(inp: SubstitutionInput) -> np.ndarray:
    """Tuples of R-classes: ``tuples[p, u]`` for ``u`` indexing ``H_0`` in mask order.

    In the first unassigned P-class the base tuple is the lowest transversal
    of the ``H_0``-orbits; the remaining tuples are its ``H_0`` images, and
    tuples of the other P-classes in its orbit are images under the lowest
    coset representatives.
    """
    h_tabs = inp.h_action.all_tables()
    h0 = inp.h0
    reps: dict[int, int] = {}
    for mask in range(inp.h_action.order):
        reps.setdefault(mask_image(mask, inp.rho), mask)
    g_tabs = inp.g_action.all_tables()
    out = np.full((inp.n_p, len(h0), inp.B), -1, dtype=np.int64)
    assigned = np.zeros(inp.n_p, dtype=bool)
    for a in range(inp.n_p):
        if assigned[a]:
            continue
        members = np.flatnonzero(inp.r_to_p == a)
        covered: set[int] = set()
        base = []
        for r in members.tolist():
            if r in covered:
                continue
            base.append(r)
            covered.update(int(h_tabs[mask][r]) for mask in h0)
        base_arr = np.array(base, dtype=np.int64)
        for img, rep in sorted(reps.items(), key=lambda kv: kv[1]):
            target = int(g_tabs[img][a])
            if assigned[target]:
                raise InvariantViolation("G' does not act freely on the P-classes")
            for u, h in enumerate(h0):
                out[target, u] = h_tabs[rep ^ h][base_arr]
            assigned[target] = True
    for a in range(inp.n_p):
        got = np.sort(out[a].ravel())
        if not np.array_equal(got, np.flatnonzero(inp.r_to_p == a)):
            raise InvariantViolation(f"tuples do not partition the R-classes over P-class {a}")
    return out


def orbit_transversal(rows: np.ndarray, tabs: np.ndarray, masks: Sequence[int]) -> list[int]:
    """Lowest-index representative of each skew-diagonal orbit among ``rows``."""
    index = RowIndex(rows)
    covered = np.zeros(rows.shape[0], dtype=bool)
    out = []
    for i in range(rows.shape[0]):
        if covered[i]:
            continue
        out.append(i)
        for mask in masks:
            j = index.find(_skew(tabs[mask], is_odd(mask), rows[i]))
            if j < 0:
                raise OrbitClosureFailure(f"image of element {i} under mask {mask} is missing")
            covered[j] = True
    return out


def _sequence(inp: SubstitutionInput, pos: int, j: int) -> np.ndarray:
    U = inp.units
    if inp.allocation == "consecutive":
        start = inp.pattern_offset + (pos * inp.K + j) * U
        if start + U > inp.M:
            raise InvariantViolation(f"pattern budget M={inp.M} exhausted")
        return np.arange(start, start + U) + 1
    if inp.M == 1:
        return np.ones(U, dtype=np.int64)
    return 1 + ((j >> np.arange(U)) & 1)


def substitution_step(inp: SubstitutionInput) -> SubstitutionResult:
    analytic = inp.validate()
    tuples = tuple_partition(inp)
    g_tabs = inp.g_action.all_tables()
    g_prime = sorted({mask_image(mask, inp.rho) for mask in range(inp.h_action.order)})
    ups = orbit_transversal(inp.omega, g_tabs, g_prime)
    U, T1, n_tup = inp.units, inp.T1, len(inp.h0)
    cache: dict[tuple[int, int, int], np.ndarray] = {}

    def piece(a: int, u: int, idx: int) -> np.ndarray:
        key = (a, u, idx)
        if key not in cache:
            r, c = inp.schedule[idx - 1]
            cache[key] = pattern_classes(tuples[a, u], inp.T2, r, c)
        return cache[key]

    made, prov = [], []
    top = 0
    for pos, w in enumerate(ups):
        units = inp.omega[w].reshape(U, T1)
        if not (units == units[:, :1]).all():
            raise InvariantViolation(f"element {w} is not constant on its units")
        cls = units[:, 0]
        occ = np.empty(U, dtype=np.int64)
        seen = np.zeros(inp.n_p, dtype=np.int64)
        for ell, a in enumerate(cls.tolist()):
            seen[a] += 1
            occ[ell] = seen[a] % n_tup  # psi_v = v mod 2^t
        for j in range(inp.K):
            seq = _sequence(inp, pos, j)
            top = max(top, int(seq.max()))
            made.append(np.concatenate([piece(int(a), int(u), int(x)) for a, u, x in zip(cls, occ, seq)]))
            prov.append((w, j))
    S = np.stack(made)
    h_tabs = inp.h_action.all_tables()
    rows, src = [], []
    for i in range(S.shape[0]):
        for mask in range(inp.h_action.order):
            rows.append(_skew(h_tabs[mask], is_odd(mask), S[i]))
            src.append((*prov[i], mask))
    stacked = np.stack(rows)
    uniq, labels = _dedupe_rows(stacked)
    first = np.unique(labels, return_index=True)[1]
    provenance = [src[i] for i in np.sort(first).tolist()]
    return SubstitutionResult(uniq, provenance, ups, tuples, top, analytic)


def verify_substitution_props(result: SubstitutionResult | np.ndarray, inp: SubstitutionInput) -> list[CheckReport]:
    """Closure, instance counts and uniform occurrence; plus the f-bar log."""
    out_rows = result.omega_prime if isinstance(result, SubstitutionResult) else np.asarray(result)
    params = {"K": inp.K, "t": inp.t, "|H|": inp.h_action.order, "k": inp.k}
    reports = []
    index = RowIndex(out_rows)
    h_tabs = inp.h_action.all_tables()
    missing = None
    for mask in range(1, inp.h_action.order):
        found = index.find_many(_skew(h_tabs[mask], is_odd(mask), out_rows))
        if (found < 0).any():
            missing = {"h": mask, "element": int(np.flatnonzero(found < 0)[0])}
            break
    reports.append(CheckReport("Prop-6.1-1", params, "closed", "closed" if missing is None else "not closed",
                               status_of(missing is None), missing))
    proj = inp.r_to_p[out_rows]
    found = RowIndex(inp.omega).find_many(proj)
    per = np.bincount(found[found >= 0], minlength=inp.omega.shape[0])
    want = inp.K * len(inp.h0)
    ok = bool((found >= 0).all() and (per == want).all())
    reports.append(CheckReport("Prop-6.1-2", params, per.tolist(), want, status_of(ok)))
    counts = np.stack([np.bincount(w, minlength=inp.n_r) for w in out_rows])
    ok = bool((counts == counts[0, 0]).all())
    reports.append(CheckReport("Prop-6.1-3", params, int(counts.min()), int(counts.max()), status_of(ok)))
    reports.append(_prop62(out_rows, found, inp, result))
    return reports


def _prop62(out_rows, found, inp: SubstitutionInput, result) -> CheckReport:
    bound = 1 - Fraction(4, 2 ** inp.e) - 1 / Fraction(inp.R_tilde)
    params = {"e": inp.e, "R~": inp.R_tilde, "bound": bound}
    same = np.flatnonzero(found == found[0])
    if same.size < 2:
        return CheckReport("Prop-6.2", params, None, bound, VACUOUS, details=["single instance"])
    a, b = out_rows[same[0]], out_rows[same[1]]
    value = fb.fbar(a, b)
    analytic = result.analytic_failures if isinstance(result, SubstitutionResult) else inp.validate()
    if bound <= 0:
        return CheckReport("Prop-6.2", params, value, bound, VACUOUS, details=["nonpositive bound"])
    if analytic:
        return CheckReport("Prop-6.2", params, value, bound, VACUOUS,
                           details=["hypotheses not met: " + "; ".join(analytic)])
    return CheckReport("Prop-6.2", params, value, bound, status_of(value >= bound))


# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ToyParams:
    """Small construction parameters; ``overrides`` maps a stage to replaced fields.

    ``d`` is the split exponent: every ``Q_s`` class of ``W_n`` splits into
    ``2^d`` classes of ``Q_{s+1}``.  ``None`` picks the least value for
    which the group actions are free.
    """

    name: str = "default"
    alphabet_size: int = 4
    p: int = 3
    eps: Fraction | None = Fraction(1, 2)
    J: int = 1
    U1: int = 2
    R: int = 4
    d: int | None = None
    overrides: dict = field(default_factory=dict)
    max_stage: int | None = None

    def at(self, n: int) -> "ToyParams":
        over = self.overrides.get(n) or self.overrides.get(str(n)) or {}
        base = replace(self, overrides={})
        if over:
            base = replace(base, **{k: (Fraction(v) if k == "eps" else v) for k, v in over.items()})
        return base

    def eps_at(self, n: int) -> Fraction:
        return Fraction(1, 2 ** n) if self.eps is None else Fraction(self.eps)

    def to_json(self) -> dict:
        return {
            "name": self.name, "alphabet_size": self.alphabet_size, "p": self.p,
            "eps": jsonable(self.eps), "J": self.J, "U1": self.U1, "R": self.R, "d": self.d,
            "overrides": {str(k): v for k, v in self.overrides.items()}, "max_stage": self.max_stage,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ToyParams":
        eps = data.get("eps", "1/2")
        return cls(
            name=data.get("name", "custom"),
            alphabet_size=int(data.get("alphabet_size", 4)),
            p=int(data.get("p", 3)),
            eps=None if eps is None else Fraction(eps),
            J=int(data.get("J", 1)),
            U1=int(data.get("U1", 2)),
            R=int(data.get("R", 4)),
            d=data.get("d"),
            overrides={int(k): dict(v) for k, v in data.get("overrides", {}).items()},
            max_stage=data.get("max_stage"),
        )


def bundled_toy_params() -> list[ToyParams]:
    path = resources.files("kakutani") / "data" / "toy_params.json"
    return [ToyParams.from_json(x) for x in json.loads(path.read_text())["sets"]]


def load_toy_params(name: str | None = None) -> ToyParams:
    sets = bundled_toy_params()
    if name is None:
        return sets[0]
    for s in sets:
        if s.name == name:
            return s
    raise KeyError(f"no bundled toy parameter set {name!r}")


def level_counts(tree: TreeTrunc, n: int) -> dict[int, int]:
    return {s: len(tree.nodes_at(s, n)) for s in range(1, s_of_n(tree, n) + 1)}


def kernel_logs(tree: TreeTrunc, m: int) -> list[int]:
    """``t_i = log2 |ker rho_{i,i-1}|`` on ``G_i^m`` for ``i = 1..s(m)``, then 0."""
    S = s_of_n(tree, m)
    out = []
    for i in range(1, S + 1):
        gens = group(tree, i, m)
        rank = 0 if i == 1 else len({g[:-1] for g in gens})
        out.append(len(gens) - rank)
    return out + [0]


def default_split(tree: TreeTrunc, n: int) -> int:
    """Least ``d`` with ``2^d > |G_s^n|`` for every level ``s``."""
    counts = level_counts(tree, n)
    return 1 + max(counts.values()) if counts else 1


@dataclass
class CollectionPlan:
    """Step schedule of one chain of substitution steps."""

    name: str
    K: list
    T: list  # T[i] is the unit length at step i+1; T[-1] the top run unit
    allocation: list
    offset: int  # pattern offset at step 1


@dataclass
class StagePlan:
    n: int
    m: int
    case: int
    S: int  # s(m)
    d: int
    d_m: int
    t: list
    B: list
    M: list
    schedules: list
    units: list
    U1: int
    p: int
    J: int
    eps: Fraction
    R: int
    collections: dict  # name -> CollectionPlan
    k: int
    k_parts: dict  # name -> k of the chain

    def to_json(self) -> dict:
        return jsonable({
            "n": self.n, "m": self.m, "case": self.case, "s_m": self.S, "d": self.d, "d_m": self.d_m,
            "t": self.t, "B": self.B, "M": self.M, "C": [s[0][0] * s[0][1] for s in self.schedules],
            "units": self.units, "U1": self.U1, "p": self.p, "J": self.J, "eps": self.eps, "R": self.R,
            "k": self.k, "k_parts": self.k_parts,
            "K": {c.name: c.K for c in self.collections.values()},
            "T": {c.name: c.T for c in self.collections.values()},
        })


def _bitlen(x: int) -> int:
    return max(1, (x - 1).bit_length())


def plan_stage(tree: TreeTrunc, n: int, params: ToyParams, d_m: int, class_counts: Sequence[int]) -> StagePlan:
    """Toy schedule for stage ``n``; ``class_counts[s]`` is ``|W_m / Q_s|``."""
    P = params.at(n)
    m = tree.previous(n)
    S = s_of_n(tree, m)
    case = 1 if s_of_n(tree, n) == S else 2
    d = P.d if P.d is not None else default_split(tree, n)
    t = kernel_logs(tree, m)
    if any(d < ti for ti in t):
        raise InvariantViolation(f"split exponent d={d} is below a kernel size {t}")
    B = [2 ** (d_m - t[i]) for i in range(S)] + [2 ** d_m] if S else [2 ** d_m]
    if case == 1:
        Ks = {"main": [2 ** (d - t[i]) for i in range(S)] + [2 ** d]}
        tops = {"main": P.p * P.p}
    else:
        Ks = {"dd": [1] * S + [2 ** (2 * d)], "d": [2 ** (d - t[i]) for i in range(S)] + [2 ** d]}
        tops = {"dd": P.p, "d": P.p * P.p - P.p}
    steps = S + 1
    first_M = sum(K[0] for K in Ks.values())
    later_M = [2 if any(K[i] > 1 for K in Ks.values()) else 1 for i in range(1, steps)]
    base_U = max(P.U1, 2 * P.J if case == 2 else 1)
    U1 = 1 << (base_U - 1).bit_length()
    while True:
        M = [first_M * U1] + later_M
        schedules = [run_schedule(B[i], M[i], "divisor") for i in range(steps)]
        C = [sch[0][0] * sch[0][1] for sch in schedules]
        units = [U1]
        for i in range(steps - 1):
            units.append(units[-1] * B[i] * C[i])
        ok = all((units[i] % class_counts[i] == 0) and ((units[i] // class_counts[i]) % (2 ** t[i]) == 0)
                 for i in range(steps))
        ok = ok and all(units[i] >= _bitlen(max(K[i] for K in Ks.values())) for i in range(1, steps))
        if ok:
            break
        U1 *= 2
        if U1 > 1 << 12:
            raise InvariantViolation("no admissible U1 below 4096")
    collections = {}
    k_parts = {}
    offset = 0
    for name, K in Ks.items():
        T = [0] * (steps + 1)
        T[steps] = tops[name]
        for i in reversed(range(steps)):
            T[i] = T[i + 1] * B[i] * C[i]
        alloc = ["consecutive"] + ["digits"] * (steps - 1)
        collections[name] = CollectionPlan(name, K, T, alloc, offset)
        offset += K[0] * U1
        k_parts[name] = U1 * T[0]
    return StagePlan(n, m, case, S, d, d_m, t, B, M, schedules, units, U1, P.p, P.J, P.eps_at(n), P.R,
                     collections, sum(k_parts.values()), k_parts)


# --------------------------------------------------------------------------
# ledger


@dataclass
class StageRecord:
    n: int
    m: int
    case: int
    p: int
    R: int
    e: int
    eps: Fraction
    J: int | None
    alpha: dict = field(default_factory=dict)
    beta: Fraction = Fraction(0)
    structure: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return jsonable({
            "n": self.n, "m": self.m, "case": self.case, "p": self.p, "R": self.R, "e": self.e,
            "eps": self.eps, "J": self.J, "alpha": {str(s): a for s, a in sorted(self.alpha.items())},
            "beta": self.beta, "structure": self.structure,
        })


@dataclass
class ParameterLedger:
    """Exact-rational distance bookkeeping, one record per stage."""

    mode: str = "toy"
    R0: int = 9
    beta0: Fraction = Fraction(1)
    e0: int = 3
    records: dict = field(default_factory=dict)
    infima: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def base_record(self) -> StageRecord:
        return StageRecord(0, 0, 0, 1, self.R0, self.e0, Fraction(1), None, {}, Fraction(self.beta0))

    def record(self, n: int) -> StageRecord:
        return self.base_record() if n == 0 else self.records[n]

    def to_json(self) -> dict:
        return {
            "mode": self.mode, "R0": self.R0, "beta0": jsonable(self.beta0), "e0": self.e0,
            "records": {str(n): r.to_json() for n, r in sorted(self.records.items())},
            "infima": {str(s): jsonable(a) for s, a in sorted(self.infima.items())},
            "notes": self.notes,
        }


def ledger_update(
    ledger: ParameterLedger,
    n: int,
    case: int,
    *,
    m: int,
    p: int,
    R: int,
    e: int,
    eps: Fraction,
    s_m: int,
    J: int | None = None,
    structure: dict | None = None,
) -> ParameterLedger:
    """Append the stage-``n`` record computed from the stage-``m`` record."""
    if m != 0 and m not in ledger.records:
        raise LedgerInconsistent(f"no record for stage {m}")
    prev = ledger.record(m)
    Rm, Rn = Fraction(prev.R), Fraction(R)
    alpha: dict[int, Fraction] = {}
    if m == 0:
        if case != 2:
            raise LedgerInconsistent("the first stage always opens level 1")
        alpha[1] = min(Fraction(1, 2) - 2 / Rn - Fraction(2, p), Fraction(1, 9))
        beta = min(Fraction(1, p) * (Fraction(1, 2) - 1 / Rn) - 2 / Rn, alpha[1])
    elif case == 1:
        for s, a in prev.alpha.items():
            alpha[s] = a - 2 / Rm - 1 / Rn
        beta = prev.beta - 2 / Rm - 1 / Rn
    elif case == 2:
        if J is None:
            raise LedgerInconsistent("Case 2 needs J")
        for s, a in prev.alpha.items():
            alpha[s] = a - 3 / Rm - 2 / Rn
        alpha[s_m + 1] = prev.beta - 3 / Rm - 2 / Rn
        beta = Fraction(1, p) * (prev.beta - 1 / Rm - Fraction(4, 2 ** prev.e) - Fraction(1, 2 * J ** 3)) - 2 / Rn
    else:
        raise LedgerInconsistent(f"unknown case {case}")
    if ledger.mode == "faithful":
        if beta <= 0 or Rn <= 9 / beta:
            raise LedgerInconsistent(f"stage {n}: beta={beta} and R={R} violate R > 9/beta")
        if any(a <= 0 for a in alpha.values()):
            raise LedgerInconsistent(f"stage {n}: nonpositive alpha")
    rec = StageRecord(n, m, case, p, R, e, Fraction(eps), J, alpha, beta, structure or {})
    ledger.records[n] = rec
    for s, a in alpha.items():
        ledger.infima[s] = min(ledger.infima.get(s, a), a)
    return ledger


# --------------------------------------------------------------------------
# faithful mode


def _is_prime(x: int) -> bool:
    if x < 2:
        return False
    f = 2
    while f * f <= x:
        if x % f == 0:
            return False
        f += 1
    return True


def next_prime_above(x: Fraction | int) -> int:
    c = math.floor(x) + 1
    while not _is_prime(c):
        c += 1
    return c


def prime_factors_of(x: int) -> set[int]:
    out, f = set(), 2
    while f * f <= x:
        while x % f == 0:
            out.add(f)
            x //= f
        f += 1
    if x > 1:
        out.add(x)
    return out


def faithful_bounds(tree: TreeTrunc, n: int, ledger: ParameterLedger, h_m: int, eps: Fraction | None = None) -> dict:
    """Least parameters satisfying the stage-``n`` inequalities, with log2 sizes."""
    m = tree.previous(n)
    prev = ledger.record(m)
    case = 1 if s_of_n(tree, n) == s_of_n(tree, m) else 2
    eps = Fraction(1, 2 ** n) if eps is None else Fraction(eps)
    primes = prime_factors_of(h_m) if h_m > 1 else set()
    p = next_prime_above(max([Fraction(4 * prev.R), Fraction(2 ** n), 1 / eps] + [Fraction(q) for q in primes]))
    R = math.ceil(Fraction(40 * p) / prev.beta)
    gmax = max([2 ** c for c in level_counts(tree, n).values()] + [1])
    e = prev.e + 1
    while 2 ** e <= max(10 * R, gmax):
        e += 1
    J = None
    if case == 2:
        J = 1
        while J <= 2 * R * R:
            J *= 2
    t = kernel_logs(tree, m)
    U1_log2 = max(8 * prev.e, (6 * (J.bit_length() - 1) + 3) if J else 1, (2 * R * R).bit_length())
    M2_log2 = U1_log2 + 4 * e - t[0]  # M2 >= K_1 U1 with K_1 >= 2^{4e - t}
    # the top-level pattern alone has 2^{(4e(m)-t)(2 M2 + 3)} runs
    T1_log2 = (4 * prev.e - t[0]) * (2 * (1 << M2_log2) + 3)
    k_log2 = U1_log2 + T1_log2
    h_log2 = k_log2 + (h_m.bit_length() - 1)
    return {
        "n": n, "m": m, "case": case, "p_n": p, "R_n": R, "e_n": e, "J": J, "eps_n": jsonable(eps),
        "constraints": {
            "p_n > max(4 R_m, 2^n, 1/eps_n, primes of h_m)": [4 * prev.R, 2 ** n, jsonable(1 / eps), sorted(primes)],
            "R_n >= 40 p_n / beta_m": jsonable(Fraction(40 * p) / prev.beta),
            "2^e(n) > max(10 R_n, max |G_s^n|)": [10 * R, gmax],
            "J > 2 R_n^2": 2 * R * R,
        },
        "log2_U1_lower": U1_log2, "log2_M2_lower": M2_log2, "log2_k_lower": k_log2,
        "log2_h_lower": h_log2, "log2_cap": EXPANSION_CAP_LOG2,
    }


def faithful_stage(prev: LabeledWordSet, tree: TreeTrunc, n: int, ledger: ParameterLedger) -> LabeledWordSet:
    report = faithful_bounds(tree, n, ledger, prev.h)
    if report["log2_h_lower"] > EXPANSION_CAP_LOG2:
        raise FaithfulInfeasible(
            f"stage {n} needs words of length at least 2^{report['log2_h_lower']}", report)
    raise FaithfulInfeasible("faithful building is only a refusal path", report)  # pragma: no cover


# --------------------------------------------------------------------------
# building a stage


@dataclass
class _Chain:
    levels: list  # levels[s] = class strings over Q_s^m labels; levels[S+1] = words
    reports: list
    patterns: int


def _level_maps(W: LabeledWordSet, S: int) -> tuple[list, list, list]:
    """P/R data of ``W_m`` for steps ``i = 1..S+1``."""
    n_cls = [W.class_count(s) for s in range(S + 1)] + [W.count]
    r_to_p = []
    for i in range(1, S + 2):
        fine = W.q_classes[i] if i <= S else np.arange(W.count)
        out = np.full(n_cls[i], -1, dtype=np.int64)
        out[fine] = W.q_classes[i - 1]
        r_to_p.append(out)
    actions = [W.actions[s] for s in range(S + 1)]
    actions.append(GroupActionTable.trivial(W.count))
    return n_cls, r_to_p, actions


def _run_chain(W: LabeledWordSet, plan: StagePlan, cp: CollectionPlan) -> _Chain:
    S = plan.S
    _, r_to_p, actions = _level_maps(W, S)
    levels = [np.zeros((1, plan.U1 * cp.T[0]), dtype=np.int64)]
    reports = []
    used = 0
    for i in range(1, S + 2):
        g_act, h_act = actions[i - 1], actions[i]
        rho = [0] * len(h_act.generators) if i == 1 else rho_masks(h_act.generators, g_act.generators)
        inp = SubstitutionInput(
            omega=levels[-1], r_to_p=r_to_p[i - 1], g_action=g_act, h_action=h_act, rho=rho,
            K=cp.K[i - 1], T2=cp.T[i], schedule=plan.schedules[i - 1], allocation=cp.allocation[i - 1],
            pattern_offset=cp.offset if i == 1 else 0, R_tilde=Fraction(plan.R), e=plan.d_m,
        )
        res = substitution_step(inp)
        for rep in verify_substitution_props(res, inp):
            rep.params.update({"stage": plan.n, "collection": cp.name, "step": i})
            reports.append(rep)
        if i == 1:
            used = res.patterns_used - cp.offset
        levels.append(res.omega_prime)
    return _Chain(levels, reports, used)


def _class_tables(levels_s: np.ndarray, action: GroupActionTable, index: RowIndex | None = None) -> np.ndarray:
    """Skew image table of each generator on the class strings of one level."""
    index = index or RowIndex(levels_s)
    tab = np.empty((len(action.generators), levels_s.shape[0]), dtype=np.int64)
    for g in range(len(action.generators)):
        found = index.find_many(_skew(action.table[g], True, levels_s))
        if (found < 0).any():
            raise SpecViolation(f"class strings are not closed under generator {action.generators[g]}")
        tab[g] = found
    return tab


def _root_base() -> GroupActionTable:
    return GroupActionTable.trivial(1, [()])


def _new_generator_action(
    tree: TreeTrunc, n: int, s0: int, labels: dict, actions: dict, sub: GroupActionTable, rho_map: Sequence[int]
) -> GroupActionTable:
    node = sigma(n)
    base = _root_base() if s0 == 1 else actions[s0 - 1]
    z_index = base.generators.index(parent(node))
    fine, coarse = labels[s0], labels[s0 - 1]
    r_to_q = np.full(int(fine.max()) + 1, -1, dtype=np.int64)
    r_to_q[fine] = coarse
    q_count = int(coarse.max()) + 1
    return extend_action(q_count, r_to_q.size // q_count, base, sub, rho_map, z_index, node, r_to_q)


def _finish_labels(raw: dict[int, np.ndarray], strings: dict[int, np.ndarray]) -> tuple[dict, dict]:
    labels, ordered = {}, {}
    for s, lab in raw.items():
        new, order = first_appearance(lab)
        labels[s] = new
        if s in strings:
            ordered[s] = strings[s][order]
    return labels, ordered


def _case1(W: LabeledWordSet, tree: TreeTrunc, plan: StagePlan) -> tuple[np.ndarray, dict, dict, list, dict]:
    S, n = plan.S, plan.n
    chain = _run_chain(W, plan, plan.collections["main"])
    words = chain.levels[S + 1]
    raw, strings = {0: np.zeros(words.shape[0], dtype=np.int64)}, {}
    for s in range(1, S + 1):
        idx = RowIndex(chain.levels[s])
        raw[s] = idx.find_many(W.q_classes[s][words])
        if (raw[s] < 0).any():
            raise SpecViolation(f"a word projects outside the level-{s} class strings")
        strings[s] = chain.levels[s]
    labels, ordered = _finish_labels(raw, strings)
    s0 = len(sigma(n))
    actions: dict[int, GroupActionTable] = {0: W.actions[0]}
    for s in range(1, S + 1):
        tab = _class_tables(ordered[s], W.actions[s])
        sub = GroupActionTable(W.actions[s].generators, ordered[s].shape[0], tab)
        if s == s0:
            rho = [0] * len(sub.generators) if s == 1 else rho_masks(sub.generators, actions[s - 1].generators)
            sub = _new_generator_action(tree, n, s0, labels, actions, sub, rho)
        actions[s] = sub
    info = {"patterns_used_step1": {"main": chain.patterns}}
    return words, labels, actions, chain.reports, info


def _case2(W: LabeledWordSet, tree: TreeTrunc, plan: StagePlan) -> tuple[np.ndarray, dict, dict, list, dict]:
    S, n, J = plan.S, plan.n, plan.J
    dd = _run_chain(W, plan, plan.collections["dd"])
    dg = _run_chain(W, plan, plan.collections["d"])
    reports = dd.reports + dg.reports
    # projections of every level-(s+1) string of each chain onto level s
    def proj_maps(chain: _Chain) -> list[np.ndarray]:
        out = []
        for s in range(S + 1):
            fine = chain.levels[s + 1]
            coarse = W.q_classes[s][fine] if s + 1 == S + 1 else _refine(W, s)[fine]
            found = RowIndex(chain.levels[s]).find_many(coarse)
            if (found < 0).any():
                raise SpecViolation("a chain element projects outside the previous level")
            out.append(found)
        return out

    up_dd, up_d = proj_maps(dd), proj_maps(dg)
    tabs_dd = {s: GroupActionTable(W.actions[s].generators, dd.levels[s].shape[0], _class_tables(dd.levels[s], W.actions[s])).all_tables()
               for s in range(1, S + 1)}
    tabs_d = {s: GroupActionTable(W.actions[s].generators, dg.levels[s].shape[0], _class_tables(dg.levels[s], W.actions[s])).all_tables()
              for s in range(1, S + 1)}
    pairs: list[list[tuple[int, int]]] = [[(0, 0)]]
    for s in range(S):
        gens_up = W.actions[s + 1].generators
        rho = [0] * len(gens_up) if s == 0 else rho_masks(gens_up, W.actions[s].generators)
        order = 1 << len(gens_up)
        images = sorted({mask_image(mask, rho) for mask in range(order)})
        cur = pairs[s]
        where = {pq: i for i, pq in enumerate(cur)}
        covered = np.zeros(len(cur), dtype=bool)
        ups = []
        for i, (c, d_) in enumerate(cur):
            if covered[i]:
                continue
            ups.append((c, d_))
            for g in images:
                img = (c, d_) if s == 0 else (int(tabs_d[s][g][c]), int(tabs_dd[s][g][d_]))
                if img not in where:
                    raise OrbitClosureFailure(f"pair {(c, d_)} leaves the level-{s} pairs under {g}")
                covered[where[img]] = True
        ker = [mask for mask in range(order) if mask_image(mask, rho) == 0]
        nxt, seen = [], set()
        for c, d_ in ups:
            inst_c = np.flatnonzero(up_d[s] == c)
            cov: set[int] = set()
            cc = []
            for x in inst_c.tolist():
                if x in cov:
                    continue
                cc.append(x)
                cov.update(int(tabs_d[s + 1][g][x]) for g in ker)
            dmin = int(np.flatnonzero(up_dd[s] == d_)[0])
            for x in cc:
                for g in range(order):
                    pq = (int(tabs_d[s + 1][g][x]), int(tabs_dd[s + 1][g][dmin]))
                    if pq not in seen:
                        seen.add(pq)
                        nxt.append(pq)
        pairs.append(nxt)
    # words v_i * d_j^{(i)}
    nd = 2 ** plan.d
    rows_v, rows_d, top = [], [], []
    for idx, (c, d_) in enumerate(pairs[S]):
        vs = np.flatnonzero(up_d[S] == c)
        ds = np.flatnonzero(up_dd[S] == d_)
        if vs.size * nd != ds.size:
            raise SpecViolation(f"pair {idx}: {vs.size} instances of C against {ds.size} of D")
        for i, v in enumerate(vs.tolist()):
            for j in range(nd):
                rows_v.append(v)
                rows_d.append(int(ds[i * nd + j]))
                top.append(len(top) // nd)
    rows_v, rows_d = np.array(rows_v), np.array(rows_d)
    words = star_interleave(dg.levels[S + 1][rows_v], dd.levels[S + 1][rows_d], J)
    # labels: level s class of v * d is the pair ([v]_s, [d]_s)
    raw = {S + 1: np.array(top, dtype=np.int64)}
    cv, cd = rows_v, rows_d
    for s in range(S, -1, -1):
        cv, cd = up_d[s][cv], up_dd[s][cd]
        where = {pq: i for i, pq in enumerate(pairs[s])}
        raw[s] = np.array([where[(a, b)] for a, b in zip(cv.tolist(), cd.tolist())], dtype=np.int64)
    labels, _ = _finish_labels(raw, {})
    actions: dict[int, GroupActionTable] = {0: W.actions[0]}
    for s in range(1, S + 1):
        lab_first = {}
        for w, (r, l) in enumerate(zip(raw[s].tolist(), labels[s].tolist())):
            lab_first.setdefault(r, l)
        old_of_new = np.empty(len(pairs[s]), dtype=np.int64)
        for r, l in lab_first.items():
            old_of_new[l] = r
        new_of_old = np.empty_like(old_of_new)
        new_of_old[old_of_new] = np.arange(old_of_new.size)
        where = {pq: i for i, pq in enumerate(pairs[s])}
        gens = W.actions[s].generators
        tab = np.empty((len(gens), old_of_new.size), dtype=np.int64)
        for g in range(len(gens)):
            mask = 1 << g
            for new, old in enumerate(old_of_new.tolist()):
                c, d_ = pairs[s][old]
                tab[g, new] = new_of_old[where[(int(tabs_d[s][mask][c]), int(tabs_dd[s][mask][d_]))]]
        actions[s] = GroupActionTable(gens, old_of_new.size, tab)
    n_top = int(labels[S + 1].max()) + 1
    sub = GroupActionTable.trivial(n_top)
    actions[S + 1] = _new_generator_action(tree, n, S + 1, labels, actions, sub, [])
    info = {
        "patterns_used_step1": {"dd": dd.patterns, "d": dg.patterns},
        "k_dd": dd.levels[S + 1].shape[1], "k_d": dg.levels[S + 1].shape[1],
        "pairs_per_level": [len(p) for p in pairs],
    }
    return words, labels, actions, reports, info


def _refine(W: LabeledWordSet, s: int) -> np.ndarray:
    fine, coarse = W.q_classes[s + 1], W.q_classes[s]
    out = np.full(int(fine.max()) + 1, -1, dtype=np.int64)
    out[fine] = coarse
    return out


def build_stage(
    prev: LabeledWordSet,
    tree: TreeTrunc,
    n: int,
    ledger: ParameterLedger,
    mode: str = "toy",
    params: ToyParams | None = None,
) -> LabeledWordSet:
    """Stage ``n`` of the construction along ``tree`` from ``prev = W_m``."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if sigma(n) not in tree:
        raise ValueError(f"sigma({n}) = {sigma(n)} is not a tree node")
    m = tree.previous(n)
    if prev.level != m:
        raise ValueError(f"stage {n} is built from stage {m}, got level {prev.level}")
    if mode == "faithful":
        return faithful_stage(prev, tree, n, ledger)
    params = params or load_toy_params()
    if params.max_stage is not None and n > params.max_stage:
        raise ConfigInvalid(f"toy parameter set {params.name!r} only covers stages up to {params.max_stage}")
    d_m = int(prev.meta.get("d", (prev.count - 1).bit_length()))
    S = s_of_n(tree, m)
    counts = [prev.class_count(s) for s in range(S + 1)]
    plan = plan_stage(tree, n, params, d_m, counts)
    if plan.case == 1:
        words, labels, actions, reports, info = _case1(prev, tree, plan)
    else:
        words, labels, actions, reports, info = _case2(prev, tree, plan)
    analytic = toy_analytic_failures(tree, plan, ledger)
    ledger.notes.extend(f"stage {n}: {x}" for x in analytic)
    ledger_update(
        ledger, n, plan.case, m=m, p=plan.p, R=plan.R, e=plan.d, eps=plan.eps, s_m=S,
        J=plan.J if plan.case == 2 else None, structure=plan.to_json(),
    )
    meta = {
        "stage": n, "m": m, "case": plan.case, "node": list(sigma(n)), "d": plan.d, "p": plan.p,
        "J": plan.J, "eps": plan.eps, "k": plan.k, "plan": plan.to_json(), "params": params.name,
        **info, "analytic_failures": analytic, "checks": [r.to_json() for r in reports],
    }
    if plan.case == 2:
        meta["k_dagger"] = info["k_d"]
    return LabeledWordSet(level=n, words=words, parent=prev, q_classes=labels, actions=actions, meta=meta)


def toy_analytic_failures(tree: TreeTrunc, plan: StagePlan, ledger: ParameterLedger) -> list[str]:
    """The stage inequalities of faithful mode that the toy parameters miss."""
    prev = ledger.record(plan.m)
    out = []
    if not _is_prime(plan.p):
        out.append(f"p={plan.p} is not prime")
    if not plan.p > max(4 * prev.R, 2 ** plan.n, 1 / plan.eps):
        out.append(f"p > max(4R_m, 2^n, 1/eps) fails: p={plan.p}")
    if not plan.R >= Fraction(40 * plan.p) / prev.beta if prev.beta > 0 else True:
        out.append(f"R >= 40p/beta_m fails: R={plan.R}")
    gmax = max([2 ** c for c in level_counts(tree, plan.n).values()] + [1])
    if not 2 ** plan.d > max(10 * plan.R, gmax):
        out.append(f"2^e > max(10R, |G|) fails: e={plan.d}")
    if plan.case == 2 and not plan.J > 2 * plan.R ** 2:
        out.append(f"J > 2R^2 fails: J={plan.J}")
    if not plan.U1 >= 2 * plan.R ** 2:
        out.append(f"U1 >= 2R^2 fails: U1={plan.U1}")
    if len(plan.M) > 1:
        out.append("later steps reuse two patterns per step instead of fresh ones")
    return out


def base_words(mode: str = "toy", params: ToyParams | None = None) -> LabeledWordSet:
    if mode == "faithful":
        ws = base_alphabet(FULL_ALPHABET)
        ws.meta["d"] = 12
        return ws
    params = params or load_toy_params()
    ws = base_alphabet(params.alphabet_size)
    ws.meta["d"] = (params.alphabet_size - 1).bit_length()
    if 1 << ws.meta["d"] != params.alphabet_size:
        raise InvariantViolation("toy alphabet size must be a power of two")
    return ws


def stage_key(tree: TreeTrunc, n: int, params: ToyParams) -> tuple:
    return (tuple(sorted(tree.truncate(n).indices())), json.dumps(params.to_json(), sort_keys=True))


def psi_construct(
    tree: TreeTrunc,
    stages: int,
    mode: str = "toy",
    toy_params: ToyParams | None = None,
    cache: dict | None = None,
    ledger: ParameterLedger | None = None,
) -> list[LabeledWordSet]:
    """Word sets ``W_0`` and ``W_n`` for every tree index ``0 < n <= stages``.

    ``cache`` (optional) maps a truncated tree and parameter set to built
    stages; by continuity the same stage is shared by all trees that agree
    up to its index.
    """
    if stages < 1:
        raise ValueError("stages must be at least 1")
    params = toy_params or (load_toy_params() if mode == "toy" else None)
    ledger = ledger if ledger is not None else ParameterLedger(mode=mode)
    if mode == "toy":
        ledger.e0 = base_words(mode, params).meta["d"]
    out = [base_words(mode, params)]
    for n in tree.indices():
        if n == 0 or n > stages:
            continue
        key = stage_key(tree, n, params) if (cache is not None and mode == "toy") else None
        if key is not None and key in cache:
            ws, rec = cache[key]
            ledger.records[n] = rec
            for s, a in rec.alpha.items():
                ledger.infima[s] = min(ledger.infima.get(s, a), a)
        else:
            ws = build_stage(out[-1], tree, n, ledger, mode, params)
            if key is not None:
                cache[key] = (ws, ledger.records[n])
        out.append(ws)
    for ws in out:
        ws.meta.setdefault("ledger_mode", ledger.mode)
    return out


def build_system(tree: TreeTrunc, stages: int, mode: str = "toy", toy_params: ToyParams | None = None,
                 cache: dict | None = None) -> tuple[list[LabeledWordSet], ParameterLedger]:
    ledger = ParameterLedger(mode=mode)
    return psi_construct(tree, stages, mode, toy_params, cache, ledger), ledger


# --------------------------------------------------------------------------
# structural checks on a built stage


def _class_reps(labels: np.ndarray) -> np.ndarray:
    _, first = np.unique(labels, return_index=True)
    return first


def _label_matches_strings(labels: np.ndarray, strings: np.ndarray) -> dict | None:
    """Witness when label equality and string equality disagree."""
    _, string_ids = _dedupe_rows(strings)
    a = {}
    b = {}
    for w, (lab, sid) in enumerate(zip(labels.tolist(), string_ids.tolist())):
        if a.setdefault(lab, sid) != sid:
            return {"word": w, "label": lab, "reason": "one label, two class strings"}
        if b.setdefault(sid, lab) != lab:
            return {"word": w, "label": lab, "reason": "one class string, two labels"}
    return None


def check_q4(ws: LabeledWordSet) -> CheckReport:
    """Words in one top class differ only near the ends of each J-segment."""
    s, J, eps = ws.s_max, int(ws.meta["J"]), Fraction(ws.meta["eps"])
    seg = ws.k // J
    margin = math.floor(eps / 2 * seg)
    params = {"s": s, "J": J, "eps": eps, "segment": seg, "margin": margin}
    labels = ws.q_classes[s]
    worst = 0
    for c, rep in enumerate(_class_reps(labels).tolist()):
        members = np.flatnonzero(labels == labels[rep])
        diff = (ws.words[members] != ws.words[rep]).any(axis=0)
        off = np.flatnonzero(diff) % seg
        bad = off[(off >= margin) & (off < seg - margin)]
        if bad.size:
            return CheckReport("Q4", params, int(bad[0]), margin, FAIL, {"class": c, "offset": int(bad[0])})
        if off.size:
            worst = max(worst, int(np.minimum(off + 1, seg - off).max()))
    return CheckReport("Q4", params, worst, margin, PASS)


def verify_stage(ws: LabeledWordSet, tree: TreeTrunc) -> list[CheckReport]:
    """Every structural property of a toy stage, checked exhaustively."""
    from .words import check_e3, check_strong_uniformity, check_unique_readability

    W = ws.parent
    n = ws.level
    S, sn = W.s_max, ws.s_max
    case = int(ws.meta["case"])
    d = int(ws.meta["d"])
    base = {"stage": n, "case": case}
    out: list[CheckReport] = []
    pow2 = ws.count & (ws.count - 1) == 0
    out.append(CheckReport("E1", {**base, "words": ws.count}, ws.k, "equal lengths, 2^a words", status_of(pow2)))
    ok, c, _ = check_strong_uniformity(W, ws)
    out.append(CheckReport("E2", base, c, "constant", status_of(ok)))
    ok, wit = check_e3(W, ws)
    out.append(CheckReport("E3", base, ok, True, status_of(ok), wit))
    ok, wit = check_unique_readability(ws)
    out.append(CheckReport("UR", base, ok, True, status_of(ok), wit))
    # Q5: at levels carried over from W_m the label is the class string
    for s in range(0, S + 1):
        wit = _label_matches_strings(ws.q_classes[s], W.q_classes[s][ws.words])
        out.append(CheckReport("Q5", {**base, "s": s}, wit is None, True, status_of(wit is None), wit))
    if case == 2:
        k_d = int(ws.meta["k_dagger"])
        v1, v2 = deinterleave(ws.words, k_d, int(ws.meta["J"]))
        key = np.concatenate([v1, W.q_classes[S][v2]], axis=1)
        wit = _label_matches_strings(ws.q_classes[sn], key)
        out.append(CheckReport("Q5", {**base, "s": sn, "relation": "v1 equal and [v2] equal"},
                               wit is None, True, status_of(wit is None), wit))
        out.append(check_q4(ws))
        ratio = Fraction(k_d, ws.k)
        want = 1 - Fraction(1, int(ws.meta["p"]))
        out.append(CheckReport("Case2-proportion", base, ratio, want, status_of(ratio == want)))
    # Q6: split counts
    for s in range(sn):
        fine, coarse = ws.q_classes[s + 1], ws.q_classes[s]
        ref = np.full(int(fine.max()) + 1, -1, dtype=np.int64)
        ref[fine] = coarse
        consistent = bool((ref[fine] == coarse).all())
        split = np.bincount(ref, minlength=int(coarse.max()) + 1)
        ok = consistent and bool((split == 2 ** d).all())
        out.append(CheckReport("Q6", {**base, "s": s}, split.tolist(), 2 ** d, status_of(ok)))
    per_top = np.bincount(ws.q_classes[sn])
    out.append(CheckReport("Q6", {**base, "s": sn, "words per class": True}, per_top.tolist(), 2 ** d,
                           status_of(bool((per_top == 2 ** d).all()))))
    # A7: actions, freeness, subordination
    for s in range(1, sn + 1):
        act = ws.actions[s]
        gens_ok = list(act.generators) == group(tree, s, n)
        ok = gens_ok and act.domain_size == int(ws.q_classes[s].max()) + 1 and act.axioms_hold() and act.is_free()
        fine, coarse = ws.q_classes[s], ws.q_classes[s - 1]
        ref = np.full(act.domain_size, -1, dtype=np.int64)
        ref[fine] = coarse
        lower = ws.actions[s - 1]
        images = [0] * len(act.generators) if s == 1 else rho_masks(act.generators, lower.generators)
        bad = check_subordinate(act, lower, ref, images)
        ok = ok and bad is None
        wit = None if ok else {"generators_canonical": gens_ok, "subordinate_violation": bad}
        out.append(CheckReport("A7", {**base, "s": s}, ok, True, status_of(ok), wit))
    # A8: old generators act by the skew-diagonal image of the class strings
    for s in range(1, S + 1):
        labels = ws.q_classes[s]
        reps = _class_reps(labels)
        strings = W.q_classes[s][ws.words[reps]]
        index = RowIndex(strings)
        bad = None
        for g, node in enumerate(W.actions[s].generators):
            found = index.find_many(_skew(W.actions[s].table[g], True, strings))
            mine = ws.actions[s].table[ws.actions[s].generators.index(node)][labels[reps]]
            if (found < 0).any() or not np.array_equal(labels[reps][found], mine):
                bad = {"generator": list(node)}
                break
        out.append(CheckReport("A8", {**base, "s": s}, bad is None, True, status_of(bad is None), bad))
    # Prop-6.1 and Prop-6.2 reports recorded while building
    for rep in ws.meta.get("checks", []):
        out.append(CheckReport(rep["check_id"], rep["params"], rep.get("lhs"), rep.get("rhs"), rep["status"],
                               rep.get("witness"), rep.get("details", [])))
    return out


def check_continuity(tree_a: TreeTrunc, tree_b: TreeTrunc, horizon: int, params: ToyParams | None = None,
                     builds: tuple | None = None) -> CheckReport:
    """Trees agreeing up to ``horizon`` give bit-identical stages up to it."""
    agree = tree_a.truncate(horizon).nodes == tree_b.truncate(horizon).nodes
    pa = builds[0] if builds else psi_construct(tree_a, horizon, "toy", params)
    pb = builds[1] if builds else psi_construct(tree_b, horizon, "toy", params)
    fa = [w.fingerprint() for w in pa if w.level <= horizon]
    fb_ = [w.fingerprint() for w in pb if w.level <= horizon]
    same = fa == fb_
    params_ = {"horizon": horizon, "trees": [tree_a.to_text().split(), tree_b.to_text().split()]}
    return CheckReport("continuity", params_, same, agree, status_of(same == agree or not agree))
