import itertools

import numpy as np
import pytest

from kakutani import words as wd
from kakutani.errors import NoValidParse
from kakutani.harness import toy_two_level
from kakutani.symbols import H, parse_string
from kakutani.words import LabeledWordSet, StationaryCode

from oracles import ur_brute


def rows(*texts):
    return np.array([[int(t) for t in x.split()] for x in texts], dtype=np.int64)


@pytest.mark.parametrize("texts,want", [(("1 2", "3 4"), True), (("1 2", "2 1"), False), (("1 1", "1 2"), False)])
def test_unique_readability_examples(texts, want):
    ok, witness = wd.check_unique_readability(rows(*texts))
    assert ok is want
    assert ur_brute([tuple(r) for r in rows(*texts).tolist()]) is want
    assert (witness is None) is want


def test_unique_readability_matches_oracle_exhaustively():
    for h in (2, 3):
        alphabet = list(itertools.product((1, 2), repeat=h))
        for size in (1, 2, 3):
            for combo in itertools.combinations(alphabet, size):
                ok, _ = wd.check_unique_readability(np.array(combo))
                assert ok == ur_brute(list(combo)), combo


def _two_level(child_rows):
    parent = wd.base_alphabet(2)
    child = LabeledWordSet(1, np.asarray(child_rows), parent=parent, q_classes={0: np.zeros(len(child_rows), dtype=np.int64)})
    return parent, child


def test_strong_uniformity():
    p, c = _two_level([[0, 1], [1, 0]])
    ok, count, _ = wd.check_strong_uniformity(p, c)
    assert ok and count == 1
    p, c = _two_level([[0, 0, 1], [0, 1, 1]])
    assert not wd.check_strong_uniformity(p, c)[0]
    single = LabeledWordSet(0, [[1]])
    ok, count, _ = wd.check_strong_uniformity(single, LabeledWordSet(1, [[0, 0, 0]], parent=single))
    assert ok and count == 3


def test_e3():
    p, c = _two_level([[0, 1, 0, 1], [1, 0, 1, 0]])
    assert not wd.check_e3(p, c)[0]
    p, c = _two_level([[0, 0, 1, 1]])
    assert wd.check_e3(p, c)[0]
    p, c = _two_level([[0, 0, 1, 1], [1, 1, 0, 0]])
    ok, witness = wd.check_e3(p, c)
    assert not ok and witness["i"] == 2


def test_rev_words():
    ws = LabeledWordSet(0, rows("1 2 3", "1 2 1"), q_classes={0: [0, 0]})
    r = wd.rev_words(ws)
    assert r.words.tolist() == [[3, 2, 1], [1, 2, 1]]
    assert np.array_equal(wd.rev_words(r).words, ws.words)


def test_parse_blocks():
    ws = LabeledWordSet(0, rows("1 1 2", "1 1 3"))
    x = np.concatenate([ws.words[0], ws.words[1]])
    assert wd.parse_blocks(x, ws).blocks == [(0, 0), (3, 1)]
    y = np.concatenate([ws.words[0][1:], ws.words[1], ws.words[0][:2]])
    parse = wd.parse_blocks(y, ws)
    assert parse.blocks == [(2, 1)] and parse.prefix == 2 and parse.suffix == 2
    with pytest.raises(NoValidParse):
        wd.parse_blocks(parse_string("4 4 4 4"), ws)


def test_odometer_coords_shift_by_level_heights():
    levels = toy_two_level()
    top = np.tile(levels[-1].expand(0).data, 6)
    h1, h2 = levels[1].h, levels[2].h
    assert wd.odometer_coords(top[: 3 * h2], levels) == [0, 0]
    assert wd.odometer_coords(top[1 : 1 + 3 * h2], levels) == [1, 0]
    assert wd.odometer_coords(top[h1 : h1 + 3 * h2], levels) == [0, 1]
    assert wd.odometer_coords(top[h2 : 4 * h2], levels) == [0, 0]


def test_project_classes():
    base = wd.base_alphabet(3)
    ws = LabeledWordSet(1, [[0, 0, 1], [0, 0, 2]], parent=base, q_classes={0: [0, 0], 1: [0, 1]})
    x = np.concatenate([ws.expand(0).data, ws.expand(1).data])
    proj0, off = wd.project_classes(x, ws, 0)
    assert set(proj0.data.tolist()) == {1} and off == 0
    proj1, _ = wd.project_classes(x, ws, 1)
    assert proj1.data.tolist() == [1, 1, 1, 2, 2, 2]
    coarse = wd.refinement_map(ws, 0)[proj1.data - 1] + 1
    assert np.array_equal(coarse, proj0.data)


def test_expand_tf_name():
    assert wd.expand_tf_name(parse_string("1 2 3"), [1, 1, 1]) == parse_string("1 2 3")
    out = wd.expand_tf_name(parse_string("1 2 3"), [1, 2, 1])
    assert out.data.tolist() == [1, 2, H, 3] and len(out) == 4
    assert wd.delete_filler(out) == parse_string("1 2 3")


def test_apply_code_examples():
    assert wd.apply_code(StationaryCode.identity(), parse_string("1 2 1")) == parse_string("1 2 1")
    assert wd.apply_code(StationaryCode.permutation({1: 2, 2: 1}), parse_string("1 2 1")) == parse_string("2 1 2")
    assert wd.apply_code(StationaryCode.majority(1), parse_string("1 1 2 1 1")) == parse_string("1 1 1")


def test_labeled_word_set_json_roundtrip():
    base = wd.base_alphabet(2)
    ws = LabeledWordSet(1, [[0, 1], [1, 0]], parent=base, q_classes={0: [0, 0], 1: [0, 1]})
    back = LabeledWordSet.from_json(ws.to_json(), parent=base)
    assert back.fingerprint() == ws.fingerprint()
