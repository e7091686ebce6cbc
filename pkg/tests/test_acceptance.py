"""Acceptance criteria 1-10.

Each test times its suite, asserts zero failures and the runtime limit, and
records a one-line verdict that is printed at the end of the pytest run.
Run this file directly to print the same lines without pytest.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kakutani import builder as bd
from kakutani import fbar as fb
from kakutani import harness as hs
from kakutani.prng import rng
from kakutani.reports import FAIL, PASS, VACUOUS

import conftest
from oracles import brute_fbar

SEED = 20240917


def _oracle_spot_check(seed: int, trials: int = 300) -> list[str]:
    """Backends against the independent enumeration oracle in tests/oracles.py."""
    gen = rng(seed, "acceptance-oracle")
    bad = []
    for _ in range(trials):
        a = gen.integers(1, 4, size=int(gen.integers(1, 7)))
        b = gen.integers(1, 4, size=int(gen.integers(1, 7)))
        want = brute_fbar(a.tolist(), b.tolist())
        got = fb.all_backend_values(a, b)
        if any(v != want for v in got.values()):
            bad.append(f"{a.tolist()} {b.tolist()}")
    return bad


def crit1():
    reps = hs.suite_fbar(SEED, max_total=14, canonical=True, random_pairs=1000, random_len=(15, 16))
    reps += hs.suite_fbar(SEED, max_total=10, canonical=False, random_pairs=0)
    bad = _oracle_spot_check(SEED)
    pairs = sum(r.details[0]["pairs"] for r in reps if r.check_id == "fbar-backends-exhaustive")
    return reps, not bad, f"{pairs} exhaustive pairs, 1000 random pairs, oracle spot-check mismatches={len(bad)}"


def crit2():
    reps = hs.suite_facts(SEED, trials=500)
    return reps, True, "500 trials per fact"


def crit3():
    reps = hs.suite_block(SEED, instances=100)
    return reps, True, "100 certified instances"


def crit4():
    reps = hs.suite_feldman_accounting(10 ** 6)
    return reps, True, f"{len(reps)} (FeldmanSpec, j) pairs with expanded length <= 1e6"


def crit5():
    reps = hs.suite_feldman_baselines()
    vals = [r.lhs for r in reps if r.check_id == "Lemma-5.1-log"]
    return reps, len(vals) == 4, "values " + ", ".join(str(v) for v in vals) + "; N >= 20 bound not run"


def crit6():
    trees = hs.small_trees(max_nodes=4, pool=8, horizon=7)
    reps = hs.suite_builder(trees=trees)
    ids = {r.check_id for r in reps}
    need = {"E1", "E2", "E3", "Q4", "Q5", "Q6", "A7", "A8", "Prop-6.1-1", "Prop-6.1-2", "Prop-6.1-3",
            "Case2-proportion", "continuity"}
    return reps, need <= ids, f"{len(trees)} trees x {len(bd.bundled_toy_params())} parameter sets, {len(reps)} checks"


def crit7():
    reps = hs.suite_faithful()
    lb = reps[0].lhs if isinstance(reps[0].lhs, dict) else {}
    return reps, True, f"p={lb.get('p_n')} R={lb.get('R_n')} e={lb.get('e_n')} log2 h >= {lb.get('log2_h_lower')}"


def crit8():
    reps = hs.suite_circular(10 ** 4, seed=SEED)
    n = max((r.params["instances"] for r in reps), default=0)
    ids = {r.check_id for r in reps}
    need = {"circular-length", "circular-gcd", "circular-j", "circular-rev", "circular-parse", "circular-functor",
            "circular-uniformity"}
    return reps, need <= ids, f"{n} coefficient sets with q2 <= 1e4"


def crit9():
    return hs.suite_odometer(SEED, shifts=1000), True, "1000 shifts"


def crit10():
    return hs.suite_codes(SEED, trials=200), True, "tf roundtrip, shift commutation, identity"


CRITERIA = {
    1: (crit1, 60), 2: (crit2, 30), 3: (crit3, 120), 4: (crit4, 30), 5: (crit5, 120),
    6: (crit6, 300), 7: (crit7, 5), 8: (crit8, 60), 9: (crit9, 10), 10: (crit10, 10),
}


def evaluate(n: int) -> tuple[bool, str]:
    fn, limit = CRITERIA[n]
    t0 = time.perf_counter()
    reps, extra_ok, note = fn()
    dt = time.perf_counter() - t0
    fails = sorted({r.check_id for r in reps if r.status == FAIL})
    statuses = {r.status for r in reps}
    ok = bool(reps) and not fails and extra_ok and statuses <= {PASS, VACUOUS} and dt <= limit
    msg = f"{note}; {len(reps)} reports, {dt:.1f}s (limit {limit}s)"
    if fails:
        msg += f"; failing {fails}"
    if dt > limit:
        msg += "; over time limit"
    return ok, msg


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok, msg = evaluate(n)
    conftest.ACCEPTANCE[n] = (ok, msg)
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {msg}")
    assert ok, msg


if __name__ == "__main__":
    worst = 0
    for n in sorted(CRITERIA):
        ok, msg = evaluate(n)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {msg}", flush=True)
        worst = worst or (not ok)
    sys.exit(int(worst))
