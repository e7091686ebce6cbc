from fractions import Fraction

import numpy as np
import pytest

from kakutani import builder as bd
from kakutani.errors import DivisibilityViolation, FaithfulInfeasible, LedgerInconsistent
from kakutani.harness import build_and_verify, small_trees, suite_faithful
from kakutani.reports import FAIL, PASS
from kakutani.symbols import parse_string
from kakutani.trees import TreeTrunc


def test_star_interleave_example():
    out = bd.star_interleave(np.array([10, 11]), np.array([1, 2, 3, 4]), 2)
    # v2_1 v1_1 v2_2 v2_3 v1_2 v2_4
    assert out.tolist() == [1, 10, 2, 3, 11, 4]
    v1, v2 = bd.deinterleave(out, 2, 2)
    assert v1.tolist() == [10, 11] and v2.tolist() == [1, 2, 3, 4]


def test_star_interleave_symbolic_and_divisibility():
    got = bd.star_interleave(parse_string("7 8"), parse_string("1 2 3 4"), 2)
    assert got == parse_string("1 7 2 3 8 4")
    with pytest.raises(DivisibilityViolation):
        bd.star_interleave(np.arange(3), np.arange(4), 2)


def test_interleave_roundtrip_batched():
    gen = np.random.default_rng(0)
    a, b = gen.integers(0, 9, size=(5, 6)), gen.integers(0, 9, size=(5, 12))
    v1, v2 = bd.deinterleave(bd.star_interleave(a, b, 3), 6, 3)
    assert np.array_equal(v1, a) and np.array_equal(v2, b)


def test_ledger_case1_example():
    led = bd.ParameterLedger(R0=100)
    led.records[1] = bd.StageRecord(1, 0, 2, 3, 100, 4, Fraction(1, 2), 2, {1: Fraction(1, 9)}, Fraction(1, 20))
    bd.ledger_update(led, 2, 1, m=1, p=5, R=1000, e=5, eps=Fraction(1, 4), s_m=1)
    assert led.records[2].alpha[1] == Fraction(1, 9) - Fraction(2, 100) - Fraction(1, 1000)
    assert led.infima[1] == led.records[2].alpha[1]


def test_ledger_first_stage_and_errors():
    led = bd.ParameterLedger()
    bd.ledger_update(led, 1, 2, m=0, p=3, R=40, e=4, eps=Fraction(1, 2), s_m=0, J=2)
    assert led.records[1].alpha[1] == min(Fraction(1, 2) - Fraction(2, 40) - Fraction(2, 3), Fraction(1, 9))
    with pytest.raises(LedgerInconsistent):
        bd.ledger_update(bd.ParameterLedger(), 1, 1, m=0, p=3, R=40, e=4, eps=Fraction(1, 2), s_m=0)
    with pytest.raises(LedgerInconsistent):
        bd.ledger_update(led, 3, 1, m=2, p=3, R=40, e=4, eps=Fraction(1, 2), s_m=1)
    with pytest.raises(LedgerInconsistent):
        bd.ledger_update(bd.ParameterLedger(mode="faithful"), 1, 2, m=0, p=3, R=4, e=4, eps=Fraction(1, 2), s_m=0, J=2)


@pytest.mark.parametrize("tree", [TreeTrunc(frozenset({(), (0,)})), TreeTrunc(frozenset({(), (0,), (1,)})),
                                  TreeTrunc(frozenset({(), (0,), (0, 0)}))])
def test_small_builds_verify(tree):
    _, reports = build_and_verify(tree, bd.load_toy_params(), 3, set())
    assert reports and all(r.status != FAIL for r in reports), [r.to_json() for r in reports if r.status == FAIL]
    ids = {r.check_id for r in reports}
    assert {"E1", "E2", "E3", "UR", "Q5", "Q6", "A7", "Prop-6.1-1", "Prop-6.1-2", "Prop-6.1-3"} <= ids


def test_built_words_have_expected_shape():
    tree = TreeTrunc(frozenset({(), (0,)}))
    system, ledger = bd.build_system(tree, 1)
    W1 = system[1]
    assert W1.parent is system[0] and W1.count & (W1.count - 1) == 0
    assert W1.meta["case"] == 2 and 1 in ledger.records


def test_continuity_of_agreeing_trees():
    a = TreeTrunc(frozenset({(), (0,)}))
    b = TreeTrunc(frozenset({(), (0,), (1,)}))
    rep = bd.check_continuity(a, b, 1)
    assert rep.status == PASS and rep.lhs is True


def test_substitution_props_on_a_stage():
    tree = TreeTrunc(frozenset({(), (0,), (0, 0)}))
    system, _ = bd.build_system(tree, 3)
    checks = [c for ws in system[1:] for c in ws.meta.get("checks", [])]
    assert any(c["check_id"] == "Prop-6.2" for c in checks)
    assert all(c["status"] != FAIL for c in checks)


def test_small_tree_enumeration():
    trees = small_trees()
    assert len(trees) == 19 and len({t.nodes for t in trees}) == 19


def test_faithful_refusal():
    (rep,) = suite_faithful()
    assert rep.status == PASS
    assert rep.lhs["p_n"] == 37 and rep.lhs["R_n"] == 1480 and rep.lhs["e_n"] == 14


def test_faithful_build_raises():
    with pytest.raises(FaithfulInfeasible) as info:
        bd.build_system(TreeTrunc(frozenset({(), (0,)})), 1, mode="faithful")
    assert info.value.report["log2_h_lower"] > info.value.report["log2_cap"]


def test_toy_params_bundled():
    names = [p.name for p in bd.bundled_toy_params()]
    assert "default" in names and "worked-example" in names
    p = bd.load_toy_params("worked-example")
    assert bd.ToyParams.from_json(p.to_json()) == p
    with pytest.raises(KeyError):
        bd.load_toy_params("nope")
