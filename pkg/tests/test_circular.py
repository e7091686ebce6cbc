from fractions import Fraction

import numpy as np
import pytest

from kakutani import circular as cc
from kakutani.circular import CircularParams
from kakutani.errors import CoefficientMismatch, MalformedCircularWord
from kakutani.reports import FAIL, PASS, VACUOUS
from kakutani.symbols import B, E, SymbolString
from kakutani.words import LabeledWordSet

from oracles import circular_word, ur_brute


def text(x):
    names = {B: "b", E: "e"}
    return [names.get(v, v) for v in np.asarray(x.data if isinstance(x, SymbolString) else x).tolist()]


def test_q_and_p_recursion():
    P = CircularParams([(2, 3), (2, 4)])
    assert [P.q(n) for n in range(3)] == [1, 6, 288]
    assert [P.p(n) for n in range(3)] == [0, 1, 49]
    assert P.q(2) == P.k(1) * P.l(1) * P.q(1) ** 2


def test_j_sequence_inverts_p():
    P = CircularParams([(2, 3), (2, 4)])
    assert cc.j_sequence(P, 0) == [0]
    js = cc.j_sequence(P, 1)
    assert js == [0, 1, 2, 3, 4, 5]  # p_1 = 1
    P2 = CircularParams([(2, 3), (2, 4), (2, 1)])
    js = cc.j_sequence(P2, 2)
    assert all((49 * j - i) % 288 == 0 for i, j in enumerate(js))
    assert sorted(js) == list(range(288))


def test_c_operator_example():
    P = CircularParams([(2, 3)])
    w = cc.c_operator(P, 0, [[1], [2]])
    assert text(w) == ["b", 1, 1, "b", 2, 2]
    assert len(w) == P.q(1)


def test_c_operator_matches_direct_transcription():
    P = CircularParams([(2, 3), (3, 2)])
    gen = np.random.default_rng(1)
    words = gen.integers(1, 4, size=(3, 6))
    got = cc.c_operator(P, 1, words)
    want = circular_word([tuple(r) for r in words.tolist()], 6, 2, cc.j_sequence(P, 1))
    assert text(got) == want


def test_reversal_identity_and_wrap_readings():
    P = CircularParams([(2, 3)])
    w = cc.c_operator(P, 0, [[1], [2]])
    rev = SymbolString(w.data[::-1])
    assert text(rev) == [2, 2, "b", 1, 1, "b"]
    assert cc.c_r_operator(P, 0, [[1], [2]], wrap="q") == rev
    assert cc.c_r_operator(P, 0, [[1], [2]], wrap="mod") != rev
    with pytest.raises(ValueError):
        cc.c_r_operator(P, 0, [[1], [2]], wrap="other")


def test_reversal_identity_deeper_level():
    P = CircularParams([(2, 3), (3, 2)])
    words = np.arange(18).reshape(3, 6) % 4 + 1
    fwd = cc.c_operator(P, 1, words)
    assert cc.c_r_operator(P, 1, words[:, ::-1]) == SymbolString(fwd.data[::-1])


def test_p_and_q_always_coprime():
    import itertools
    import math

    for pairs in itertools.product([(2, 1), (3, 2), (4, 3), (6, 5)], repeat=3):
        P = CircularParams(pairs)
        assert all(math.gcd(P.p(n), P.q(n)) == 1 for n in range(1, 4))
    with pytest.raises(ValueError):
        CircularParams([(1, 2)])


def test_parse_subscales_example():
    P = CircularParams([(2, 3)])
    sub = cc.parse_subscales(cc.c_operator(P, 0, [[1], [2]]), P, 0)
    assert sub.two.tolist() == [[0, 6]]
    assert sub.one.tolist() == [[0, 3], [3, 3]]
    assert sub.zero.tolist() == [[1, 2], [4, 2]]
    assert sub.words.tolist() == [[1], [2]]


def test_parse_rejects_corruption():
    P = CircularParams([(2, 3), (3, 2)])
    w = cc.c_operator(P, 1, np.ones((3, 6), dtype=np.int64)).data.copy()
    spacer = int(np.flatnonzero(w == B)[0])
    bad = w.copy()
    bad[spacer] = 7
    with pytest.raises(MalformedCircularWord, match="spacer"):
        cc.parse_subscales(bad, P, 1)
    body = int(np.flatnonzero(w == 1)[-1])
    bad = w.copy()
    bad[body] = 7
    with pytest.raises(MalformedCircularWord):
        cc.parse_subscales(bad, P, 1)
    with pytest.raises(MalformedCircularWord):
        cc.parse_subscales(w[:-1], P, 1)


def test_functor_lengths_and_prewords():
    seq = cc.toy_odometer_sequence(2, 4)
    P = CircularParams([(2, 3), (4, 2)])
    out = cc.functor_F(seq, P)
    assert np.array_equal(out[0].words, seq[0].words)  # c_0 is the identity
    for t in (1, 2):
        assert out[t].words.shape[1] == P.q(t)
        assert out[t].meta["circular"] and out[t].meta["prewords"] == seq[t].words.tolist()
    assert np.array_equal(cc.read_prewords(out[2], out[1], P), seq[2].words)
    # the rotations (0 1)^2, (1 0)^2 overlap, so this toy level is not readable
    assert cc.check_strong_readability(seq[2].words) is ur_brute([tuple(r) for r in seq[2].words.tolist()]) is False
    assert cc.check_strong_readability([[0, 0, 1], [0, 1, 1]]) is ur_brute([(0, 0, 1), (0, 1, 1)])
    ok, counts = cc.circular_uniformity(out[2], out[1], P)
    assert ok and counts.sum(axis=1).tolist() == [P.q(1) * 1 * 4] * seq[2].count


def test_functor_coefficient_mismatch():
    seq = cc.toy_odometer_sequence(2, 4)
    with pytest.raises(CoefficientMismatch):
        cc.functor_F(seq, CircularParams([(3, 3), (4, 2)]))
    with pytest.raises(CoefficientMismatch):
        cc.functor_F(seq[1:], CircularParams([(2, 3), (4, 2)]))


def test_spacer_census():
    P = CircularParams([(2, 3), (3, 2)])
    w = cc.c_operator(P, 1, np.ones((3, 6), dtype=np.int64)).data
    q, k = P.q(1), P.k(1)
    # each 1-subsection carries q_n spacers in total, split b^{q-j} e^{j}
    assert (w == B).sum() + (w == E).sum() == q * k * q
    assert (w == E).sum() == k * sum(cc.j_sequence(P, 1))


def test_ledger_and_vacuous_fbar():
    P = CircularParams([(2, 3), (4, 2)])
    led = cc.circular_ledger(P, [0, 4, 4], [0, 2, 3], [0, 1, 2])
    assert led.alpha[(1, 1)] == min(Fraction(1, 2) - Fraction(3, 4) - 1 - Fraction(2, 3), Fraction(1, 9))
    assert not led.exact  # l_1 = 2 is not a square
    seq = cc.toy_odometer_sequence(2, 4)
    reps = cc.verify_circular_fbar(cc.functor_F(seq, P), P, led)
    # toy R and p are far too small for positive bounds
    assert reps and all(r.status == VACUOUS for r in reps)
    assert all(0 < r.lhs <= 1 for r in reps)


def test_identity_checks_pass_with_q_wrap():
    P = CircularParams([(2, 3), (3, 2)])
    reps = cc.identity_checks(P, seed=4)
    assert {r.check_id for r in reps} >= {"circular-j", "circular-gcd", "circular-length", "circular-rev", "circular-parse"}
    assert all(r.status == PASS for r in reps)
    mod = cc.identity_checks(P, seed=4, wrap="mod")
    assert any(r.status == FAIL for r in mod if r.check_id == "circular-rev")


def test_params_json_and_lint():
    P = CircularParams([(2, 3), (3, 2)])
    assert CircularParams.from_json(P.to_json()) == P
    assert isinstance(P.realization_lint([0, 4, 4]), list)
