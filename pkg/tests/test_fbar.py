from fractions import Fraction

import numpy as np
import pytest

from kakutani import fbar as fb
from kakutani.errors import HypothesisUnverifiable, LengthMismatch
from kakutani.prng import rng
from kakutani.reports import FAIL, PASS
from kakutani.symbols import RleString, parse_string

from oracles import brute_fbar, tokens


def s(text):
    return parse_string(text)


@pytest.mark.parametrize("a,b,want", [("1 2 3", "1 2 3", 0), ("1 2 3", "1 3 3", Fraction(1, 3)), ("1 1", "2 2", 1)])
def test_dbar_examples(a, b, want):
    assert fb.dbar(s(a), s(b)) == want


def test_dbar_needs_equal_lengths():
    with pytest.raises(LengthMismatch):
        fb.dbar(s("1 2"), s("1"))


@pytest.mark.parametrize("a,b,want", [("1 2", "1 2", 0), ("1 2", "2 1", Fraction(1, 2)), ("1 1 1", "2 2 2", 1)])
@pytest.mark.parametrize("backend", fb.BACKENDS)
def test_fbar_examples(a, b, want, backend):
    assert fb.fbar(s(a), s(b), backend=backend) == want
    assert brute_fbar(tokens(a), tokens(b)) == want


@pytest.mark.parametrize("a,b,want", [("1 2", "1 2", [(0, 0), (1, 1)]), ("1 2", "2 1", [(0, 1)]), ("1", "2", [])])
def test_best_match(a, b, want):
    m = fb.best_match(s(a), s(b))
    assert m == want
    assert fb.is_match(s(a), s(b), m)


def test_infinite_window_example():
    vals = fb.fbar_infinite_window(s("1 2 1 2 1"), s("2 1 2 1 2"), 2, 2, [1])
    assert vals == [Fraction(1, 3)]
    assert brute_fbar((2, 1, 2), (1, 2, 1)) == Fraction(1, 3)


def test_infinite_window_identical_and_disjoint():
    x = s("1 2 3 1 2 3 1")
    assert fb.fbar_infinite_window(x, x, 3, 3, [1, 2, 3]) == [0, 0, 0]
    y = s("4 5 4 5 4 5 4")
    assert fb.fbar_infinite_window(x, y, 3, 3, [1, 2]) == [1, 1]


def test_backends_agree_with_oracle_random():
    gen = rng(3, "test-fbar")
    for _ in range(200):
        a = gen.integers(1, 4, size=int(gen.integers(1, 9)))
        b = gen.integers(1, 4, size=int(gen.integers(1, 9)))
        want = brute_fbar(a.tolist(), b.tolist())
        for backend in fb.BACKENDS:
            assert fb.fbar(a, b, backend=backend) == want


def test_rle_input_matches_expanded():
    a = RleString.from_runs([(1, 5), (2, 3), (1, 4)])
    b = RleString.from_runs([(2, 6), (1, 6)])
    assert fb.fbar(a, b, backend="rle") == fb.fbar(a.expand(), b.expand(), backend="dp")


def test_bitparallel_long_strings():
    gen = rng(5, "bitparallel")
    a = gen.integers(1, 3, size=300)
    b = gen.integers(1, 3, size=257)
    assert fb.fbar(a, b, backend="bitparallel") == fb.fbar(a, b, backend="dp")


def test_small_exhaustive_sweep_non_canonical():
    out = fb.exhaustive_sweep(7, 3, canonical=False)
    assert out["mismatches"] == 0 and out["pairs"] > 0


def test_fact_suite_small():
    rep = fb.verify_fact_suite(20, 7)
    assert rep.status == PASS


def test_block_replacement_worked_example():
    A, B = np.ones(8, dtype=np.int64), np.full(8, 2, dtype=np.int64)
    rep = fb.verify_block_replacement([("a", A), ("b", B)], [("b", B), ("a", A)], Fraction(1, 8), Fraction(2))
    assert rep.status == PASS
    assert rep.lhs > rep.rhs


def test_block_replacement_identical_sequences():
    A, B = np.ones(4, dtype=np.int64), np.full(4, 2, dtype=np.int64)
    seq = [("a", A), ("b", B), ("a", A)]
    rep = fb.verify_block_replacement(seq, seq, Fraction(1, 8), Fraction(2))
    assert rep.lhs == 0 and rep.rhs <= 0 and rep.status == PASS


def test_block_replacement_rejects_uncertified():
    A = np.array([1, 2, 1, 2])
    B = np.array([2, 1, 2, 1])
    with pytest.raises(HypothesisUnverifiable):
        fb.verify_block_replacement([("a", A)], [("b", B)], Fraction(1, 8), Fraction(2))


def test_block_replacement_bad_alpha():
    A = np.ones(4, dtype=np.int64)
    with pytest.raises(HypothesisUnverifiable):
        fb.verify_block_replacement([("a", A)], [("a", A)], Fraction(1, 5), Fraction(2))


def test_infinite_window_rejects_nonpositive_radius():
    from kakutani.errors import WindowOutOfBounds

    with pytest.raises(WindowOutOfBounds):
        fb.fbar_infinite_window(s("1 2 3"), s("1 2 3"), 1, 1, [0])
