"""Small independent reference implementations used to pin expected values.

They share no code with the package and favour obviousness over speed.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache


def tokens(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split())


def brute_maxmatch(a, b) -> int:
    """Largest strictly increasing pairing with equal symbols, by exhaustion."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def go(i: int, j: int) -> int:
        best = 0
        for x in range(i, len(a)):
            for y in range(j, len(b)):
                if a[x] == b[y]:
                    best = max(best, 1 + go(x + 1, y + 1))
        return best

    return go(0, 0)


def brute_fbar(a, b) -> Fraction:
    return 1 - Fraction(2 * brute_maxmatch(a, b), len(a) + len(b))


def ur_brute(words: list[tuple[int, ...]]) -> bool:
    """Unique readability: no word sits strictly inside a concatenation of two."""
    S = set(words)
    h = len(words[0])
    for u, v in itertools.product(words, repeat=2):
        uv = u + v
        for off in range(1, h):
            if uv[off : off + h] in S:
                return False
    return True


def circular_word(k_words: list[tuple[int, ...]], q: int, l: int, js: list[int], b: str = "b", e: str = "e") -> list:
    """Direct transcription of the circular operator with spacer names as strings."""
    out: list = []
    for ji in js:
        for w in k_words:
            out += [b] * (q - ji) + list(w) * (l - 1) + [e] * ji
    return out


def feldman_pattern_text(T: int, N: int, M: int, j: int) -> list[int]:
    """Geometric Feldman pattern over blocks 1..N, written out naively."""
    r = N ** (2 * j)
    c = N ** (2 * (M + 1 - j))
    out: list[int] = []
    for _ in range(c):
        for s in range(1, N + 1):
            out += [s] * (T * r)
    return out
