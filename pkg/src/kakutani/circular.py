"""Circular construction sequences.

Coefficients ``(k_n, l_n)`` give ``q_{n+1} = k_n l_n q_n^2`` and
``p_{n+1} = p_n k_n l_n q_n + 1``.  The operator ``C_n`` spreads ``k_n``
words over ``q_n`` two-subsections, framing each run ``w_j^{l_n - 1}`` by
``b^{q_n - j_i}`` and ``e^{j_i}`` with ``j_i = p_n^{-1} i mod q_n``.

``functor_F`` turns an odometer-based sequence (consecutive levels, each
word a ``k_n``-fold concatenation) into the circular one word for word.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import fbar as fb
from .errors import CoefficientMismatch, MalformedCircularWord, NonInvertible, ShapeMismatch
from .reports import VACUOUS, CheckReport, bound_status, status_of
from .symbols import B, E, StringLike, SymbolString, as_array
from .trees import GroupActionTable
from .words import DEFAULT_EXPAND_CAP, LabeledWordSet, check_unique_readability

WRAP_READINGS = ("q", "mod")


@dataclass(frozen=True)
class CircularParams:
    """Coefficient pairs ``(k_n, l_n)`` for ``n < horizon``."""

    pairs: tuple = ()

    def __post_init__(self):
        pairs = tuple((int(k), int(l)) for k, l in self.pairs)
        for k, l in pairs:
            if k < 2 or l < 1:
                raise ValueError(f"need k >= 2 and l >= 1, got {(k, l)}")
        object.__setattr__(self, "pairs", pairs)
        q, p = [1], [0]
        for k, l in pairs:
            p.append(p[-1] * k * l * q[-1] + 1)
            q.append(k * l * q[-1] ** 2)
            if math.gcd(p[-1], q[-1]) != 1:
                raise NonInvertible(f"p={p[-1]} and q={q[-1]} are not coprime")
        object.__setattr__(self, "_q", tuple(q))
        object.__setattr__(self, "_p", tuple(p))

    @property
    def horizon(self) -> int:
        return len(self.pairs)

    def q(self, n: int) -> int:
        return self._q[n]

    def p(self, n: int) -> int:
        return self._p[n]

    def k(self, n: int) -> int:
        return self.pairs[n][0]

    def l(self, n: int) -> int:
        return self.pairs[n][1]

    def R_c(self, n: int, R1: int) -> int:
        """``R_1^c = R_1``; ``R_n^c = floor(sqrt(l_{n-2}) k_{n-2} q_{n-2}^2)``."""
        if n == 1:
            return R1
        k, l, q = self.k(n - 2), self.l(n - 2), self.q(n - 2)
        return math.isqrt(l * k * k * q ** 4)

    def realization_lint(self, R: Sequence[int]) -> list[str]:
        """Violations of ``l_n >= max(4 R_{n+2}^2, 9 l_{n-1}^2)`` (where ``R`` is known)."""
        out = []
        for n in range(self.horizon):
            need = [9 * self.l(n - 1) ** 2] if n >= 1 else []
            if n + 2 < len(R):
                need.append(4 * R[n + 2] ** 2)
            if need and self.l(n) < max(need):
                out.append(f"l_{n}={self.l(n)} < {max(need)}")
        return out

    def to_json(self) -> dict:
        return {"pairs": [list(x) for x in self.pairs], "q": list(self._q), "p": list(self._p)}

    @classmethod
    def from_json(cls, data: dict) -> "CircularParams":
        return cls(tuple(tuple(x) for x in data["pairs"]))


def extend_params(params: CircularParams, k: int, l: int) -> CircularParams:
    return CircularParams(params.pairs + ((k, l),))


def j_sequence(params: CircularParams, n: int) -> list[int]:
    """``j_i`` with ``p_n j_i = i mod q_n``; ``[0]`` at ``n = 0``."""
    if n == 0:
        return [0]
    q, p = params.q(n), params.p(n)
    try:
        inv = pow(p, -1, q)
    except ValueError as exc:
        raise NonInvertible(f"p_{n}={p} has no inverse mod {q}") from exc
    return [(inv * i) % q for i in range(q)]


def _check_words(params: CircularParams, n: int, words) -> np.ndarray:
    """Words as a ``(k_n, q_n)`` array."""
    if n >= params.horizon:
        raise ShapeMismatch(f"no coefficients for n={n}")
    q, k = params.q(n), params.k(n)
    if isinstance(words, np.ndarray) and words.ndim == 2:
        W = words.astype(np.int64, copy=False)
        if W.shape != (k, q):
            raise ShapeMismatch(f"expected a ({k}, {q}) word array, got {W.shape}")
        return W
    arrs = [as_array(w) for w in words]
    if len(arrs) != k:
        raise ShapeMismatch(f"expected k_{n}={k} words, got {len(arrs)}")
    if any(a.size != q for a in arrs):
        raise ShapeMismatch(f"every word must have length q_{n}={q}")
    return np.stack(arrs)


def _guard(params: CircularParams, n: int, cap: int) -> None:
    if params.q(n + 1) > cap:
        raise ShapeMismatch(f"q_{n + 1}={params.q(n + 1)} exceeds the expansion cap {cap}")


def _assemble(W: np.ndarray, starts: np.ndarray, head_sym: int, tail_sym: int, l: int) -> np.ndarray:
    """Blocks ``head^{q-s_i} W_j^{l-1} tail^{s_i}`` for every ``(i, j)``, row-major.

    Each block is the window at offset ``s_i`` of ``head^q W_j^{l-1} tail^q``.
    ``W`` is ``(k, q)`` or a batch ``(b, k, q)``; the result is flat or ``(b, -1)``.
    """
    batch = W.ndim == 3
    W3 = W if batch else W[None]
    b, k, q = W3.shape
    ext = np.empty((b, k, (l + 1) * q), dtype=np.int64)
    ext[..., :q] = head_sym
    ext[..., q : l * q].reshape(b, k, l - 1, q)[:] = W3[:, :, None, :]
    ext[..., l * q :] = tail_sym
    s0, s1, s2 = ext.strides
    win = np.lib.stride_tricks.as_strided(ext, shape=(b, k, q + 1, l * q), strides=(s0, s1, s2, s2), writeable=False)
    out = win[:, :, starts, :].transpose(0, 2, 1, 3).reshape(b, -1)
    return out if batch else out[0]


def c_operator(params: CircularParams, n: int, words: Sequence[StringLike], cap: int = DEFAULT_EXPAND_CAP) -> SymbolString:
    arrs = _check_words(params, n, words)
    _guard(params, n, cap)
    starts = np.asarray(j_sequence(params, n), dtype=np.int64)
    return SymbolString(_assemble(arrs, starts, B, E, params.l(n)))


def _j_next(params: CircularParams, n: int, wrap: str) -> list[int]:
    """``j_{i+1}`` for ``i < q_n``; the wrap value ``j_{q_n}`` is ``q_n`` or ``j_0``."""
    if wrap not in WRAP_READINGS:
        raise ValueError(f"wrap must be one of {WRAP_READINGS}")
    js = j_sequence(params, n)
    last = params.q(n) if wrap == "q" else js[0]
    return js[1:] + [last]


def c_r_operator(
    params: CircularParams, n: int, words: Sequence[StringLike], wrap: str = "q", cap: int = DEFAULT_EXPAND_CAP
) -> SymbolString:
    arrs = _check_words(params, n, words)
    _guard(params, n, cap)
    starts = np.asarray(_j_next(params, n, wrap), dtype=np.int64)
    return SymbolString(_assemble(arrs[::-1], starts, E, B, params.l(n)))


@dataclass
class Subscales:
    two: np.ndarray  # (offset, length) rows, one per 2-subsection
    one: np.ndarray  # (offset, length) rows, one per (i, j)
    zero: np.ndarray  # (offset, length) of w_j^{l-1}, one per (i, j)
    words: np.ndarray | None  # recovered w_j as a (k_n, q_n) array; None when l_n = 1
    j: list


def _read_words(arr: np.ndarray, params: CircularParams, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Words read off the first 2-subsection of each row, and ``C_n`` of them rebuilt."""
    q, k, l = params.q(n), params.k(n), params.l(n)
    js = np.asarray(j_sequence(params, n), dtype=np.int64)
    step = l * q
    if l > 1:
        first = arr[:, : k * step].reshape(-1, k, step)
        words = first[:, :, q - js[0] : 2 * q - js[0]].copy()
    else:
        words = np.zeros((arr.shape[0], k, q), dtype=np.int64)
    return words, _assemble(words, js, B, E, l)


def parse_subscales(x: StringLike, params: CircularParams, n: int) -> Subscales:
    """Split a level-``n+1`` circular word into its 2-, 1- and 0-subsections.

    The words are read off the first 2-subsection; the whole input must then
    coincide with ``C_n`` of them.
    """
    arr = as_array(x)
    q, k, l = params.q(n), params.k(n), params.l(n)
    if arr.size != params.q(n + 1):
        raise MalformedCircularWord(f"length {arr.size} is not q_{n + 1}={params.q(n + 1)}")
    js = np.asarray(j_sequence(params, n), dtype=np.int64)
    step = l * q
    words, rebuilt = _read_words(arr[None], params, n)
    words, rebuilt = words[0], rebuilt[0]
    if not np.array_equal(rebuilt, arr):
        _malformed(rebuilt, arr, js, q, k, step)
    starts = np.arange(q * k, dtype=np.int64) * step
    two = np.stack([np.arange(q, dtype=np.int64) * k * step, np.full(q, k * step)], axis=1)
    one = np.stack([starts, np.full(q * k, step)], axis=1)
    zero = np.stack([starts + q - np.repeat(js, k), np.full(q * k, (l - 1) * q)], axis=1)
    return Subscales(two, one, zero, words if l > 1 else None, js.tolist())


def _malformed(rebuilt: np.ndarray, arr: np.ndarray, js: np.ndarray, q: int, k: int, step: int):
    pos = int(np.flatnonzero(rebuilt != arr)[0])
    i, j, r = pos // (k * step), (pos // step) % k, pos % step
    where = "spacer frame" if (r < q - js[i] or r >= step - js[i]) else "0-subsection power"
    raise MalformedCircularWord(f"{where} broken in 1-subsection ({i}, {j}) at offset {pos}")


# --------------------------------------------------------------------------
# the functor


def functor_F(
    odometer_seq: Sequence[LabeledWordSet], params: CircularParams, cap: int = DEFAULT_EXPAND_CAP
) -> list[LabeledWordSet]:
    """Circular word sets ``c_t(W_t)`` for consecutive odometer levels.

    ``odometer_seq[0]`` holds single symbols (``c_0`` is the identity) and
    ``odometer_seq[t+1]`` holds index strings over ``odometer_seq[t]``.
    Class labels and action tables are carried over unchanged.
    """
    if not odometer_seq or odometer_seq[0].k != 1 or odometer_seq[0].parent is not None:
        raise CoefficientMismatch("the first level must consist of single symbols")
    out = [_circular_set(odometer_seq[0], odometer_seq[0].words, params, 0)]
    for t in range(1, len(odometer_seq)):
        W = odometer_seq[t]
        if W.parent is not odometer_seq[t - 1]:
            raise CoefficientMismatch(f"level {t} is not built on level {t - 1}")
        if t - 1 >= params.horizon or W.k != params.k(t - 1):
            raise CoefficientMismatch(f"level {t} has k={W.k}, coefficients give {params.k(t - 1) if t - 1 < params.horizon else None}")
        if W.count * params.q(t) > cap:
            raise ShapeMismatch(f"level {t} circular words exceed the expansion cap")
        rows = _assemble(out[-1].words[W.words], np.asarray(j_sequence(params, t - 1), dtype=np.int64), B, E,
                         params.l(t - 1))
        out.append(_circular_set(W, rows, params, t))
    return out


def _circular_set(W: LabeledWordSet, rows: np.ndarray, params: CircularParams, t: int) -> LabeledWordSet:
    return LabeledWordSet(
        level=t,
        words=rows,
        parent=None,
        q_classes=dict(W.q_classes),
        actions=dict(W.actions),
        meta={"circular": True, "params": params.to_json(), "prewords": W.words.tolist() if W.parent is not None else None,
              "source_level": W.level},
    )


def check_strong_readability(prewords: Sequence[Sequence[int]] | np.ndarray, parent_words=None) -> bool:
    """Unique readability of the prewords over the parent-word index alphabet."""
    rows = np.asarray(prewords, dtype=np.int64)
    ok, _ = check_unique_readability(rows if rows.ndim == 2 else [np.asarray(p) for p in prewords])
    return ok


def read_prewords(child: LabeledWordSet, parent_set: LabeledWordSet, params: CircularParams) -> np.ndarray:
    """Index strings recovered from circular words by parsing their subscales.

    Entry ``[c, j]`` is the first parent word equal to the ``j``-th
    0-subsection word of child ``c``; ``-1`` if none matches.
    """
    t = child.level
    k, l = params.k(t - 1), params.l(t - 1)
    out = np.full((child.count, k), -1, dtype=np.int64)
    if l == 1:
        return out
    words, rebuilt = _read_words(child.words, params, t - 1)
    bad = np.flatnonzero((rebuilt != child.words).any(axis=1))
    if bad.size:
        js = np.asarray(j_sequence(params, t - 1), dtype=np.int64)
        _malformed(rebuilt[bad[0]], child.words[bad[0]], js, params.q(t - 1), k, l * params.q(t - 1))
    hit = (words[:, :, None, :] == parent_set.words[None, None, :, :]).all(axis=3)
    found = hit.any(axis=2)
    out[found] = hit.argmax(axis=2)[found]
    return out


def circular_uniformity(child: LabeledWordSet, parent_set: LabeledWordSet, params: CircularParams,
                        prewords: np.ndarray | None = None) -> tuple[bool, np.ndarray]:
    """Occurrences of each distinct parent circular word in each child word.

    Identical parent images (all-spacer words when some ``l = 1``) are
    merged before counting.  ``prewords`` may pass an earlier
    ``read_prewords`` result.
    """
    t = child.level
    q, l = params.q(t - 1), params.l(t - 1)
    keys: dict[bytes, int] = {}
    inverse = np.array([keys.setdefault(row.tobytes(), len(keys)) for row in parent_set.words], dtype=np.int64)
    counts = np.zeros((child.count, len(keys)), dtype=np.int64)
    if l == 1:
        return True, counts
    pre = read_prewords(child, parent_set, params) if prewords is None else prewords
    if (pre < 0).any():
        raise MalformedCircularWord("a 0-subsection is not a parent circular word")
    cls = inverse.reshape(-1)[pre]
    for c in range(child.count):
        counts[c] = np.bincount(cls[c], minlength=len(keys)) * q * (l - 1)
    return bool((counts == counts[0, 0]).all()), counts


def toy_odometer_sequence(k0: int, k1: int) -> list[LabeledWordSet]:
    """Two-step strongly uniform odometer sequence with ``k_0``, ``k_1`` blocks.

    ``W_0`` has ``k_0`` letters, ``W_1`` the ``g = gcd(k_0, k_1)`` first
    rotations of ``1..k_0``, and ``W_2`` the ``g`` rotations of
    ``(0..g-1)^{k_1/g}``.
    """
    g = math.gcd(k0, k1)
    W0 = LabeledWordSet(0, np.arange(1, k0 + 1)[:, None], q_classes={0: np.zeros(k0, dtype=np.int64)},
                        actions={0: GroupActionTable.trivial(1)})
    base1 = np.arange(k0)
    W1 = LabeledWordSet(1, np.stack([np.roll(base1, -r) for r in range(g)]), parent=W0,
                        q_classes={0: np.zeros(g, dtype=np.int64), 1: np.arange(g) // 2 if g > 1 else np.zeros(1, dtype=np.int64)},
                        actions={0: GroupActionTable.trivial(1)})
    base2 = np.tile(np.arange(g), k1 // g)
    W2 = LabeledWordSet(2, np.stack([np.roll(base2, -r) for r in range(g)]), parent=W1,
                        q_classes={0: np.zeros(g, dtype=np.int64), 1: np.arange(g) // 2 if g > 1 else np.zeros(1, dtype=np.int64)},
                        actions={0: GroupActionTable.trivial(1)})
    return [W0, W1, W2]


# --------------------------------------------------------------------------
# distance bookkeeping and f-bar checks


def _inv_sqrt_upper(l: int) -> tuple[Fraction, bool]:
    """An upper bound for ``1/sqrt(l)``; exact when ``l`` is a square."""
    r = math.isqrt(l)
    return Fraction(1, r), r * r == l


@dataclass
class CircularLedger:
    alpha: dict = field(default_factory=dict)  # (s, n) -> Fraction
    beta: dict = field(default_factory=dict)  # n -> Fraction
    R_c: dict = field(default_factory=dict)
    exact: bool = True

    def to_json(self) -> dict:
        from .reports import jsonable

        return {
            "alpha": {f"{s},{n}": jsonable(v) for (s, n), v in sorted(self.alpha.items())},
            "beta": {str(n): jsonable(v) for n, v in sorted(self.beta.items())},
            "R_c": {str(n): v for n, v in sorted(self.R_c.items())},
            "exact": self.exact,
        }


def circular_ledger(params: CircularParams, R: Sequence[int], p: Sequence[int], s_levels: Sequence[int]) -> CircularLedger:
    """Lower bounds ``alpha^c_{s,n}``, ``beta^c_n`` for ``n = 1..len(R)-1``.

    ``R[n]``, ``p[n]`` and ``s_levels[n]`` are the odometer parameters of
    consecutive level ``n`` (index 0 unused).  Terms ``2/sqrt(l)`` use an
    upper bound for ``1/sqrt(l)`` when ``l`` is not a square, which only
    lowers the bounds.
    """
    led = CircularLedger()
    N = len(R) - 1
    if N < 1:
        return led
    R1, p1, l0 = Fraction(R[1]), Fraction(p[1]), Fraction(params.l(0))
    led.alpha[(1, 1)] = min(Fraction(1, 2) - 3 / R1 - 2 / p1 - 2 / l0, Fraction(1, 9))
    led.beta[1] = min(1 / p1 * (Fraction(1, 2) - 1 / R1) - 3 / R1 - 2 / l0, led.alpha[(1, 1)])
    for n in range(1, N + 1):
        led.R_c[n] = params.R_c(n, R[1])
    for n in range(1, N):
        Rn, Rn1 = Fraction(R[n]), Fraction(R[n + 1])
        s_n, s_n1 = s_levels[n], s_levels[n + 1]
        cur = {s: a for (s, m), a in led.alpha.items() if m == n}
        if s_n1 == s_n:
            for s, a in cur.items():
                led.alpha[(s, n + 1)] = a - 2 / Rn - 3 / Rn1
            led.beta[n + 1] = led.beta[n] - 2 / Rn - 3 / Rn1
        else:
            for s, a in cur.items():
                led.alpha[(s, n + 1)] = a - 2 / Rn - 4 / Rn1
            led.alpha[(s_n + 1, n + 1)] = led.beta[n] - 2 / Rn - 4 / Rn1
            inv, exact = _inv_sqrt_upper(params.l(n))
            led.exact = led.exact and exact
            led.beta[n + 1] = (Fraction(1, 2 * p[n + 1]) * (led.beta[n] - Fraction(1, led.R_c[n]) - 2 * inv)
                               - 3 / Rn1)
    return led


def verify_circular_fbar(
    system: Sequence[LabeledWordSet], params: CircularParams, ledger: CircularLedger
) -> list[CheckReport]:
    """f-bar between circular words in distinct classes against the ledger bounds."""
    out = []
    for cw in system[1:]:
        n = cw.level
        if n not in ledger.R_c:
            continue
        win = -(-params.q(n) // ledger.R_c[n])
        for s in sorted(x for x in cw.q_classes if x >= 1):
            labels = cw.q_classes[s]
            pair = _first_pair(labels)
            if pair is None:
                continue
            out.extend(_fbar_reports(cw, pair, win, ledger.alpha.get((s, n)), f"circular-alpha", {"s": s, "n": n}))
        if cw.count >= 2:
            out.extend(_fbar_reports(cw, (0, 1), win, ledger.beta.get(n), "circular-beta", {"n": n}))
    return out


def _first_pair(labels: np.ndarray) -> tuple[int, int] | None:
    diff = np.flatnonzero(labels != labels[0])
    return (0, int(diff[0])) if diff.size else None


def _fbar_reports(cw, pair, win, bound, check_id, params) -> list[CheckReport]:
    a, b = cw.words[pair[0]], cw.words[pair[1]]
    reps = []
    for name, (x, y) in {"full": (a, b), "window": (a[:win], b[-win:])}.items():
        value = fb.fbar(x, y)
        p = {**params, "pair": list(pair), "window": name, "length": int(x.size)}
        if bound is None:
            reps.append(CheckReport(check_id, p, value, None, VACUOUS, details=["no ledger bound"]))
        else:
            reps.append(CheckReport(check_id, p, value, bound, bound_status(value, bound, strict=True)))
    return reps


def identity_checks(params: CircularParams, words_per_level: dict | None = None, seed: int = 0,
                    gen: np.random.Generator | None = None, wrap: str = "q") -> list[CheckReport]:
    """Length, coprimality, j congruence, reversal and parse roundtrip at every level.

    Random words come from ``gen`` when given (so a sweep can share one
    stream), otherwise from a stream derived from ``seed``.
    """
    from .prng import rng

    gen = gen if gen is not None else rng(seed, "circular-identities")
    out = []
    for n in range(params.horizon):
        q, k = params.q(n), params.k(n)
        fp = {"pairs": [list(x) for x in params.pairs], "n": n, "wrap": wrap}
        js = j_sequence(params, n)
        ok = all((params.p(n) * j - i) % q == 0 for i, j in enumerate(js)) if n else js == [0]
        out.append(CheckReport("circular-j", fp, ok, True, status_of(ok)))
        g = math.gcd(params.p(n + 1), params.q(n + 1))
        out.append(CheckReport("circular-gcd", fp, g, 1, status_of(g == 1)))
        if words_per_level and n in words_per_level:
            words = words_per_level[n]
        else:
            words = gen.integers(1, 4, size=(k, q))
        words = _check_words(params, n, words)
        cw = c_operator(params, n, words)
        out.append(CheckReport("circular-length", fp, len(cw), params.q(n + 1), status_of(len(cw) == params.q(n + 1))))
        rev = c_r_operator(params, n, words[:, ::-1], wrap=wrap)
        same = cw.reversed() == rev
        out.append(CheckReport("circular-rev", fp, same, True, status_of(same)))
        parse = parse_subscales(cw, params, n)
        back = (params.l(n) == 1 or np.array_equal(parse.words, words)) and parse.j == js
        out.append(CheckReport("circular-parse", fp, back, True, status_of(back)))
    return out
