import json
from fractions import Fraction

import numpy as np
import pytest

from kakutani import baselines
from kakutani import feldman as fd
from kakutani.errors import BaselineMismatch, BaselineMissing, BadIndex
from kakutani.reports import PASS, VACUOUS

from oracles import feldman_pattern_text


def test_pattern_matches_naive_text():
    for T, N, M in [(1, 2, 1), (2, 2, 1), (1, 3, 1), (1, 2, 2)]:
        spec = fd.FeldmanSpec.with_symbols(T, N, M)
        for j in range(1, M + 1):
            got = fd.feldman_pattern(spec, j, "expanded").data.tolist()
            assert got == feldman_pattern_text(T, N, M, j)


def test_worked_example_counts():
    spec = fd.FeldmanSpec.with_symbols(1, 2, 1)
    pat = fd.feldman_pattern(spec, 1, "expanded").data
    assert pat.tolist() == ([1] * 4 + [2] * 4) * 4
    assert len(pat) == 32 == fd.closed_form_length(1, 2, 1, 1)
    acc = fd.count_accounting(spec, 1)
    assert acc["occurrences"] == [16, 16] and acc["cycles"] == 4


def test_last_pattern_has_n_squared_cycles():
    spec = fd.FeldmanSpec.with_symbols(1, 3, 2)
    assert fd.count_accounting(spec, 2)["cycles"] == 9


def test_rle_and_expanded_agree():
    spec = fd.FeldmanSpec.with_symbols(2, 3, 1)
    assert fd.feldman_pattern(spec, 1, "rle").expand() == fd.feldman_pattern(spec, 1, "expanded")


def test_bad_index():
    spec = fd.FeldmanSpec.with_symbols(1, 3, 2)
    with pytest.raises(BadIndex):
        fd.feldman_pattern(spec, 3, "rle")


def test_same_pattern_distance_zero():
    spec = fd.FeldmanSpec.with_symbols(1, 3, 1)
    assert fd.verify_different_patterns(spec, 1, 1).lhs == 0


def test_separation_vacuous_at_small_n():
    spec = fd.FeldmanSpec.with_symbols(1, 4, 2)
    rep = fd.verify_feldman_separation(spec, Fraction(1, 8), Fraction(2), 1, 2)
    assert rep.status == VACUOUS and rep.lhs is not None


def test_separation_needs_distinct_patterns():
    spec = fd.FeldmanSpec.with_symbols(1, 3, 2)
    with pytest.raises(ValueError):
        fd.verify_feldman_separation(spec, Fraction(1, 8), Fraction(2), 1, 1)


def test_coding_lemma_vacuous_and_logged():
    b, a, perms = baselines.coding_toy_blocks(4, 4, 4)
    rep = fd.coding_lemma_instance(4, 4, 4, 1, b, a, perms, baselines.coding_toy_code(4),
                                   Fraction(2), Fraction(1), Fraction(1, 8))
    assert rep.status == VACUOUS
    stored = baselines.lookup(baselines.coding_instance(4, 4, 4).fingerprint, "coding")
    assert rep.lhs == stored


SMALL = [baselines.feldman_instance(1, 2, 2), baselines.feldman_instance(1, 3, 2)]


def test_baseline_record_idempotent_and_check(tmp_path):
    baselines.record("feldman", tmp_path, SMALL)
    first = (tmp_path / "feldman.json").read_bytes()
    baselines.record("feldman", tmp_path, SMALL)
    assert (tmp_path / "feldman.json").read_bytes() == first
    assert len(baselines.check("feldman", tmp_path, instances=SMALL)) == 2
    with pytest.raises(BaselineMismatch) as info:
        baselines.check("feldman", tmp_path, instances=[baselines.feldman_instance(1, 5, 2)])
    assert "5" in json.dumps(info.value.diff, default=str)


def test_bundled_baselines_check():
    vals = [v for _, v in baselines.check("feldman")]
    assert vals == [Fraction(16, 27), Fraction(45, 64), Fraction(96, 125), Fraction(175, 216)]


def test_baseline_value_change_detected(tmp_path):
    baselines.record("feldman", tmp_path, SMALL)
    doc = json.loads((tmp_path / "feldman.json").read_text())
    doc["entries"][0]["value"] = "1/2"
    (tmp_path / "feldman.json").write_text(json.dumps(doc))
    with pytest.raises(BaselineMismatch):
        baselines.check("feldman", tmp_path, instances=SMALL)


def test_missing_baseline(tmp_path):
    with pytest.raises(BaselineMissing):
        baselines.check("feldman", tmp_path)


def test_divisor_schedule_accounting_consistent():
    spec = fd.FeldmanSpec.with_symbols(1, 3, 2, schedule="divisor")
    for j in (1, 2):
        acc = fd.count_accounting(spec, j)
        assert acc["length"] == spec.pattern_length()
        assert acc["occurrences"] == [spec.block_occurrences()] * 3
        assert acc["cycles"] == spec.cycle_count(j)
