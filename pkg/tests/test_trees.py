import numpy as np
import pytest

from kakutani import trees as tr
from kakutani.errors import ClassOutOfRange, HypothesisViolated
from kakutani.trees import GroupActionTable, InvolutionElement, TreeTrunc


def T(*nodes):
    return TreeTrunc(frozenset([()] + [tuple(n) for n in nodes]))


def test_sigma_prefix():
    assert [tr.sigma(i) for i in range(8)] == [(), (0,), (1,), (0, 0), (2,), (0, 1), (1, 0), (0, 0, 0)]


def test_sigma_roundtrip():
    for n in range(10 ** 4):
        assert tr.sigma_index(tr.sigma(n)) == n


def test_m_and_s():
    t = T((0,), (0, 0))
    assert tr.m_of_s(t, 1) == 1 and tr.m_of_s(t, 2) == 3
    assert tr.m_of_s(T((1,)), 1) == 2
    assert tr.s_of_n(t, 2) == 1 and tr.s_of_n(t, 3) == 2
    assert tr.s_of_n(TreeTrunc(frozenset({()}), 5), 5) == 0


def test_branches():
    assert tr.max_branch_length(T()) == 0
    t = T((0,), (0, 0))
    assert tr.max_branch_length(t) == 2 and len(tr.branches(t)) == 1
    t = T((0,), (1,))
    assert tr.max_branch_length(t) == 1 and len(tr.branches(t)) == 2


def test_group():
    assert len(tr.group(T((0,), (1,)), 1, 2)) == 2
    assert tr.group(T((0,), (1,)), 0, 2) == []
    assert tr.group(TreeTrunc(frozenset({(), (0,)}), 1), 1, 0) == []


def test_parity():
    g, h = InvolutionElement.generator((0,)), InvolutionElement.generator((1,))
    assert tr.parity(InvolutionElement.identity(1)) == "even"
    assert tr.parity(g) == "odd"
    assert tr.parity(g + h) == "even"


def test_rho():
    t = T((0,), (0, 0), (0, 1))
    g = InvolutionElement.generator((0, 0))
    assert tr.rho(t, 2, 1, g) == InvolutionElement.generator((0,))
    assert tr.rho(t, 2, 0, g).is_identity
    both = g + InvolutionElement.generator((0, 1))
    assert tr.rho(t, 2, 1, both).is_identity


def test_coherent_sequences():
    t = T((0,), (1,), (0, 0))
    ids = [InvolutionElement.identity(0), InvolutionElement.identity(1), InvolutionElement.identity(2)]
    assert tr.coherent_sequence_check(t, ids)
    chain = [InvolutionElement.identity(0), InvolutionElement.generator((0,)), InvolutionElement.generator((0, 0))]
    assert tr.coherent_sequence_check(t, chain)
    bad = [InvolutionElement.identity(0), InvolutionElement.generator((1,)), InvolutionElement.generator((0, 0))]
    assert not tr.coherent_sequence_check(t, bad)


def test_skew_diagonal_apply():
    swap = GroupActionTable(((0,),), 3, np.array([[1, 0, 2]]))
    assert tr.skew_diagonal_apply(0, swap, [0, 1, 2]) == [0, 1, 2]
    assert tr.skew_diagonal_apply(1, swap, [0, 0, 1]) == [0, 1, 1]
    two = GroupActionTable(((0,), (1,)), 4, np.array([[1, 0, 3, 2], [2, 3, 0, 1]]))
    assert tr.skew_diagonal_apply(3, two, [0, 1]) == [3, 2]
    with pytest.raises(ClassOutOfRange):
        tr.skew_diagonal_apply(1, swap, [5])


def test_action_axioms_and_freeness():
    two = GroupActionTable(((0,), (1,)), 4, np.array([[1, 0, 3, 2], [2, 3, 0, 1]]))
    assert two.axioms_hold() and two.is_free()
    assert not GroupActionTable.trivial(2, [(0,)]).is_free()
    back = GroupActionTable.from_json(two.to_json())
    assert np.array_equal(back.table, two.table)


def test_extend_action_forced_swap():
    base = GroupActionTable(((0,),), 1, np.array([[0]]))  # Z2 acting trivially on one Q-class
    sub = GroupActionTable((), 2, np.zeros((0, 2), dtype=np.int64))
    ext = tr.extend_action(1, 2, base, sub, [], 0, new_generator=(0,))
    assert ext.table.tolist()[-1] == [1, 0]
    assert ext.is_free() and ext.axioms_hold()


def test_extend_action_free_on_four_classes():
    base = GroupActionTable(((0,),), 2, np.array([[1, 0]]))
    sub = GroupActionTable(((1,),), 4, np.array([[1, 0, 3, 2]]))
    ext = tr.extend_action(2, 2, base, sub, [0], 0, new_generator=(0, 0))
    assert ext.axioms_hold() and ext.is_free()


def test_extend_action_parity_obstruction():
    base = GroupActionTable(((0,),), 1, np.array([[0]]))
    sub = GroupActionTable((), 1, np.zeros((0, 1), dtype=np.int64))
    with pytest.raises(HypothesisViolated):
        tr.extend_action(1, 1, base, sub, [], 0, new_generator=(0,))


def test_tree_text_roundtrip_and_validation():
    t = T((0,), (1,), (0, 0))
    assert TreeTrunc.from_text(t.to_text()).nodes == t.nodes
    with pytest.raises(ValueError):
        TreeTrunc(frozenset({(), (0, 0)}))
