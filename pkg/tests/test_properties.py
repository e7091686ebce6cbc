from fractions import Fraction

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from kakutani import builder as bd
from kakutani import circular as cc
from kakutani import fbar as fb
from kakutani.symbols import RleString

from oracles import brute_fbar

strings = st.lists(st.integers(1, 3), min_size=1, max_size=7)


@settings(max_examples=200, deadline=None)
@given(strings, strings)
def test_fbar_symmetric_bounded_and_exact(a, b):
    v = fb.fbar(np.array(a), np.array(b))
    assert isinstance(v, Fraction) and 0 <= v <= 1
    assert v == fb.fbar(np.array(b), np.array(a)) == brute_fbar(a, b)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 3), st.integers(1, 5)), min_size=1, max_size=5),
       st.lists(st.tuples(st.integers(1, 3), st.integers(1, 5)), min_size=1, max_size=5))
def test_rle_backend_matches_dp(ra, rb):
    a, b = RleString.from_runs(ra), RleString.from_runs(rb)
    assert fb.fbar(a, b, backend="rle") == fb.fbar(a.expand(), b.expand(), backend="dp")


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2 ** 16))
def test_interleave_roundtrip(J, a, b, seed):
    gen = np.random.default_rng(seed)
    v1, v2 = gen.integers(0, 5, size=J * a), gen.integers(0, 5, size=2 * J * b)
    back = bd.deinterleave(bd.star_interleave(v1, v2, J), v1.size, J)
    assert np.array_equal(back[0], v1) and np.array_equal(back[1], v2)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.integers(1, 4), st.integers(2, 3), st.integers(1, 3), st.integers(0, 2 ** 16))
def test_circular_reversal_and_parse(k0, l0, k1, l1, seed):
    P = cc.CircularParams([(k0, l0), (k1, l1)])
    gen = np.random.default_rng(seed)
    for n in (0, 1):
        words = gen.integers(1, 4, size=(P.k(n), P.q(n)))
        w = cc.c_operator(P, n, words)
        assert len(w) == P.q(n + 1)
        assert cc.c_r_operator(P, n, words[:, ::-1]) == w.reversed()
        sub = cc.parse_subscales(w, P, n)
        assert P.l(n) == 1 or np.array_equal(sub.words, words)
