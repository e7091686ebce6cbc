"""Verification suites shared by the CLI and the test-suite.

Each suite returns a list of ``CheckReport``; sizes default to something a
laptop runs in seconds and can be raised for the full acceptance runs.
"""

from __future__ import annotations

import functools
import itertools
import math
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import baselines
from . import builder as bd
from . import circular as cc
from . import fbar as fb
from . import feldman as fd
from .errors import BaselineMismatch, BaselineMissing, FaithfulInfeasible, HypothesisUnverifiable
from .prng import rng
from .reports import FAIL, PASS, CheckReport, jsonable, status_of
from .symbols import H, SymbolString
from .trees import GroupActionTable, TreeTrunc, sigma
from .words import (
    LabeledWordSet,
    StationaryCode,
    apply_code,
    delete_filler,
    expand_tf_name,
    odometer_coords,
)

# --------------------------------------------------------------------------
# f-bar backends, facts, block replacement


def suite_fbar(seed: int, max_total: int = 10, canonical: bool = True, random_pairs: int = 200,
               random_len: tuple[int, int] = (15, 16)) -> list[CheckReport]:
    sweep = fb.exhaustive_sweep(max_total, 3, canonical)
    out = [CheckReport("fbar-backends-exhaustive", {"max_total": max_total, "canonical": canonical},
                       sweep["mismatches"], 0, status_of(sweep["mismatches"] == 0 and sweep["pairs"] > 0),
                       witness=sweep["first_mismatch"], details=[{"pairs": sweep["pairs"]}])]
    gen = rng(seed, "fbar-random-pairs")
    bad = []
    for t in range(random_pairs):
        total = int(gen.integers(random_len[0], random_len[1] + 1))
        n = int(gen.integers(1, total))
        a = gen.integers(1, 4, size=n)
        b = gen.integers(1, 4, size=total - n)
        vals = fb.all_backend_values(a, b)
        if len(set(vals.values())) != 1:
            bad.append({"trial": t, "a": a.tolist(), "b": b.tolist(), "values": jsonable(vals)})
    out.append(CheckReport("fbar-backends-random", {"seed": seed, "pairs": random_pairs, "total_len": list(random_len)},
                           len(bad), 0, status_of(not bad), witness=bad[0] if bad else None))
    return out


def suite_facts(seed: int, trials: int = 100) -> list[CheckReport]:
    return [fb.verify_fact_suite(trials, seed)]


def random_block_instance(gen: np.random.Generator) -> tuple[list, list, Fraction, Fraction]:
    """Labelled block sequences whose cross-label hypothesis certifies.

    Blocks for different labels draw from disjoint symbol ranges, except that
    with probability 1/2 one shared symbol is planted, which certification
    then has to accept or reject.
    """
    while True:
        n_labels = int(gen.integers(2, 4))
        L = int(gen.integers(3, 9))
        R = Fraction(int(gen.integers(2, 5)))
        alpha = Fraction(int(gen.integers(1, 7)), 43)
        blocks = {}
        for lab in range(n_labels):
            blocks[lab] = gen.integers(1 + 3 * lab, 4 + 3 * lab, size=L)
        if gen.integers(0, 2):
            blocks[1][int(gen.integers(0, L))] = int(blocks[0][0])
        la = gen.integers(0, n_labels, size=int(gen.integers(2, 7)))
        lb = gen.integers(0, n_labels, size=int(gen.integers(2, 7)))
        seq_a = [(int(x), blocks[int(x)]) for x in la]
        seq_b = [(int(x), blocks[int(x)]) for x in lb]
        try:
            cert = fb.certify_cross_blocks({k: v for k, v in blocks.items()}, alpha, R)
        except HypothesisUnverifiable:
            continue
        if cert["min"] >= alpha:
            return seq_a, seq_b, alpha, R


def suite_block(seed: int, instances: int = 20) -> list[CheckReport]:
    gen = rng(seed, "block-replacement")
    reps = [fb.verify_block_replacement(*random_block_instance(gen)) for _ in range(instances)]
    bad = [i for i, r in enumerate(reps) if r.status == FAIL]
    return [CheckReport("Lemma-block-replacement", {"seed": seed, "instances": instances}, len(bad), 0,
                        status_of(not bad), witness=reps[bad[0]].witness if bad else None)]


# --------------------------------------------------------------------------
# Feldman patterns


def feldman_specs(max_len: int) -> list[fd.FeldmanSpec]:
    """Specs (T, N, M, L) with ``L`` in {1, 2} whose expanded pattern fits ``max_len``."""
    out = []
    for T, N, M, L in itertools.product(range(1, 4), range(2, 9), range(1, 4), (1, 2)):
        if T * N ** (2 * M + 3) * L > max_len:
            continue
        blocks = tuple(SymbolString.of([1 + i] * L if L == 1 else [1 + i, 1 + (i + 1) % N]) for i in range(N))
        out.append(fd.FeldmanSpec(T, N, M, blocks))
    return out


def suite_feldman_accounting(max_len: int = 10 ** 6) -> list[CheckReport]:
    out = []
    for spec in feldman_specs(max_len):
        for j in range(1, spec.M + 1):
            got = fd.count_accounting(spec, j)
            want = {
                "length": fd.closed_form_length(spec.T, spec.N, spec.M, spec.L),
                "occurrences": [fd.closed_form_occurrences(spec.T, spec.N, spec.M)] * spec.N,
                "cycles": fd.closed_form_cycles(spec.N, spec.M, j),
            }
            out.append(CheckReport("Lemma-5.1-accounting", {"spec": spec.fingerprint(), "j": j}, got, want,
                                   status_of(got == want)))
    return out


def feldman_closed_form(N: int) -> Fraction:
    """Observed closed form of the recorded ``(T, L, M) = (1, 1, 2)`` baselines."""
    return Fraction((N * N - 1) * (N - 1), N ** 3)


def suite_feldman_baselines(directory: Path | None = None) -> list[CheckReport]:
    out = []
    values = []
    for N in (3, 4, 5, 6):
        spec = fd.FeldmanSpec.with_symbols(1, N, 2)
        inst = baselines.feldman_instance(1, N, 2)
        try:
            stored = baselines.lookup(inst.fingerprint, "feldman", directory)
        except BaselineMissing as exc:
            out.append(CheckReport("Lemma-5.1-log", {"N": N}, None, None, FAIL, details=[str(exc)]))
            continue
        rep = fd.verify_different_patterns(spec, 1, 2, baseline=stored)
        values.append(rep.lhs)
        out.append(rep)
        cf = feldman_closed_form(N)
        out.append(CheckReport("Lemma-5.1-closed-form", {"N": N}, rep.lhs, cf, status_of(rep.lhs == cf)))
    mono = all(x <= y for x, y in zip(values, values[1:]))
    out.append(CheckReport("Lemma-5.1-monotone", {"N": [3, 4, 5, 6]}, values, "nondecreasing", status_of(mono)))
    return out


def suite_baseline_check(suite: str, directory: Path | None = None) -> list[CheckReport]:
    try:
        rows = baselines.check(suite, directory)
    except BaselineMismatch as exc:
        return [CheckReport(f"baseline-{suite}", {"suite": suite}, None, None, FAIL, witness=exc.diff, details=[str(exc)])]
    return [CheckReport(f"baseline-{suite}", {"suite": suite, "fingerprint": fp}, v, v, PASS) for fp, v in rows]


# --------------------------------------------------------------------------
# builder


def small_trees(max_nodes: int = 4, pool: int = 8, horizon: int = 7) -> list[TreeTrunc]:
    """Every tree with at most ``max_nodes`` nodes drawn from sigma_0..sigma_{pool-1}."""
    nodes = [sigma(i) for i in range(pool)]
    out = []
    for r in range(max_nodes):
        for comb in itertools.combinations(range(1, pool), r):
            S = {()} | {nodes[i] for i in comb}
            if all(t[:-1] in S for t in S if t):
                out.append(TreeTrunc(frozenset(S), horizon))
    return out


def bundled_trees() -> dict[str, TreeTrunc]:
    root = resources.files("kakutani") / "data" / "trees"
    return {p.name: TreeTrunc.from_text(p.read_text()) for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".txt")}


def build_and_verify(tree: TreeTrunc, params: bd.ToyParams | None = None, stages: int | None = None,
                     verified: set | None = None) -> tuple[list[LabeledWordSet], list[CheckReport]]:
    """Build one tree and verify every stage not already in ``verified``."""
    params = params or bd.load_toy_params()
    stages = stages or tree.horizon
    if params.max_stage is not None:
        stages = min(stages, params.max_stage)
    ws = bd.psi_construct(tree, stages, "toy", params)
    reps = []
    for w in ws[1:]:
        key = bd.stage_key(tree, w.level, params)
        if verified is not None:
            if key in verified:
                continue
            verified.add(key)
        for r in bd.verify_stage(w, tree):
            r.params = {**r.params, "params": params.name, "tree": [list(t) for t in tree.ordered()]}
            reps.append(r)
    return ws, reps


def continuity_reports(trees: list[TreeTrunc], builds: list[list[LabeledWordSet]], horizon: int) -> list[CheckReport]:
    """Compare fingerprints stage by stage for every pair of trees."""
    out = []
    prints = [{w.level: w.fingerprint() for w in ws} for ws in builds]
    for a, b in itertools.combinations(range(len(trees)), 2):
        for n in range(1, horizon + 1):
            ta, tb = trees[a].truncate(n), trees[b].truncate(n)
            if ta.nodes != tb.nodes:
                continue
            if n not in prints[a] or n not in prints[b]:
                continue
            same = prints[a][n] == prints[b][n]
            out.append(CheckReport("continuity", {"n": n, "trees": [a, b]}, prints[a][n], prints[b][n], status_of(same)))
    return out


def suite_builder(trees: list[TreeTrunc] | None = None, param_sets: list[bd.ToyParams] | None = None) -> list[CheckReport]:
    trees = trees if trees is not None else list(bundled_trees().values())
    param_sets = param_sets or bd.bundled_toy_params()
    out = []
    for params in param_sets:
        verified: set = set()
        builds = []
        for t in trees:
            ws, reps = build_and_verify(t, params, verified=verified)
            builds.append(ws)
            out.extend(reps)
        horizon = max(t.horizon for t in trees)
        out.extend(continuity_reports(trees, builds, horizon))
    return out


def suite_faithful() -> list[CheckReport]:
    tree = TreeTrunc(frozenset({(), (0,)}))
    ws = bd.base_words("faithful")
    ledger = bd.ParameterLedger(mode="faithful")
    try:
        bd.build_stage(ws, tree, 1, ledger, mode="faithful")
    except FaithfulInfeasible as exc:
        ok, why = recheck_faithful(exc.report, ledger)
        return [CheckReport("faithful-refusal", {"n": 1}, jsonable(exc.report), "FaithfulInfeasible",
                            status_of(ok), details=why)]
    return [CheckReport("faithful-refusal", {"n": 1}, "built", "FaithfulInfeasible", FAIL)]


def recheck_faithful(report: dict, ledger: bd.ParameterLedger) -> tuple[bool, list[str]]:
    """Re-evaluate the stage-1 inequalities from the stage-0 ledger."""
    prev = ledger.record(0)
    p, R, e = report["p_n"], report["R_n"], report["e_n"]
    eps = Fraction(report["eps_n"])
    bad = []
    if not (p > 4 * prev.R and p > 2 and p > 1 / eps and all(p % d for d in range(2, math.isqrt(p) + 1))):
        bad.append("p_n")
    if not Fraction(R) >= Fraction(40 * p) / prev.beta:
        bad.append("R_n")
    if not 2 ** e > 10 * R:
        bad.append("e_n")
    if report["log2_h_lower"] <= report["log2_cap"]:
        bad.append("size")
    return not bad, bad


# --------------------------------------------------------------------------
# circular


def toy_circular_params(q2_max: int = 10 ** 4) -> list[cc.CircularParams]:
    out = []
    for k0 in range(2, 101):
        for l0 in range(1, 101):
            q1 = k0 * l0
            if q1 * q1 * 2 > q2_max:
                break
            for k1 in range(2, q2_max + 1):
                if k1 * q1 * q1 > q2_max:
                    break
                for l1 in range(1, q2_max + 1):
                    if k1 * l1 * q1 * q1 > q2_max:
                        break
                    out.append(cc.CircularParams(((k0, l0), (k1, l1))))
    return out


def suite_circular(q2_max: int = 10 ** 4, limit: int | None = None, seed: int = 0) -> list[CheckReport]:
    params_list = toy_circular_params(q2_max)
    if limit is not None:
        params_list = params_list[:limit]
    fails: dict[str, list] = {}
    counts: dict[str, int] = {}
    gen = rng(seed, "circular-identities")
    for P in params_list:
        reps = cc.identity_checks(P, gen=gen)
        reps += _functor_checks(P)
        for r in reps:
            counts[r.check_id] = counts.get(r.check_id, 0) + 1
            if r.status == FAIL:
                fails.setdefault(r.check_id, []).append(r.params)
    return [CheckReport(cid, {"q2_max": q2_max, "instances": n}, len(fails.get(cid, [])), 0,
                        status_of(cid not in fails), witness=fails.get(cid, [None])[0])
            for cid, n in sorted(counts.items())]


@functools.lru_cache(maxsize=None)
def _toy_sequence(k0: int, k1: int) -> list[LabeledWordSet]:
    return cc.toy_odometer_sequence(k0, k1)


def _functor_checks(P: cc.CircularParams) -> list[CheckReport]:
    seq = _toy_sequence(P.k(0), P.k(1))
    system = cc.functor_F(seq, P)
    fp = {"pairs": [list(x) for x in P.pairs]}
    ok = all(system[t].k == P.q(t) for t in range(3))
    # parsing c_2(w) must give back the c_1 images of the letters of w
    pre = None
    if P.l(1) > 1 and P.l(0) > 1:
        pre = cc.read_prewords(system[2], system[1], P)
        ok = ok and np.array_equal(pre, seq[2].words)
    uni = (cc.circular_uniformity(system[1], system[0], P)[0]
           and cc.circular_uniformity(system[2], system[1], P, pre)[0])
    return [CheckReport("circular-functor", fp, ok, True, status_of(ok)),
            CheckReport("circular-uniformity", fp, uni, True, status_of(uni))]


def suite_circular_fbar() -> list[CheckReport]:
    P = cc.CircularParams(((2, 3), (2, 4)))
    system = cc.functor_F(cc.toy_odometer_sequence(2, 2), P)
    led = cc.circular_ledger(P, [0, 4, 5], [0, 3, 3], [0, 1, 1])
    return cc.verify_circular_fbar(system, P, led)


# --------------------------------------------------------------------------
# odometer coordinates and codes


def toy_two_level(k0: int = 3, k1: int = 2) -> list[LabeledWordSet]:
    """Symbols, words of length ``k0`` and words of ``k1`` of those."""
    W0 = LabeledWordSet(0, np.arange(1, 4)[:, None], q_classes={0: np.zeros(3, dtype=np.int64)},
                        actions={0: GroupActionTable.trivial(1)})
    W1 = LabeledWordSet(1, np.array([[0] * (k0 - 1) + [1], [0] * (k0 - 1) + [2]]), parent=W0,
                        q_classes={0: np.zeros(2, dtype=np.int64)})
    W2 = LabeledWordSet(2, np.array([[0] * (k1 - 1) + [1]]), parent=W1, q_classes={0: np.zeros(1, dtype=np.int64)})
    return [W0, W1, W2]


def _add_one(coords: list[int], radices: list[int]) -> list[int]:
    out = list(coords)
    for t, r in enumerate(radices):
        out[t] += 1
        if out[t] < r:
            return out
        out[t] = 0
    return out


def suite_odometer(seed: int, shifts: int = 1000) -> list[CheckReport]:
    levels = toy_two_level()
    top = levels[-1].expand(0).data
    name = np.tile(top, 12)
    radices = [levels[t + 1].k for t in range(len(levels) - 1)]
    span = levels[-1].h
    gen = rng(seed, "odometer-shifts")
    bad = []
    for _ in range(shifts):
        pos = int(gen.integers(0, name.size - 4 * span))
        x = name[pos : pos + 3 * span]
        y = name[pos + 1 : pos + 1 + 3 * span]
        cx, cy = odometer_coords(x, levels), odometer_coords(y, levels)
        if cy != _add_one(cx, radices):
            bad.append({"pos": pos, "coords": cx, "shifted": cy})
    return [CheckReport("odometer-coords", {"seed": seed, "shifts": shifts, "radices": radices}, len(bad), 0,
                        status_of(not bad), witness=bad[0] if bad else None)]


def suite_codes(seed: int, trials: int = 200) -> list[CheckReport]:
    gen = rng(seed, "codes")
    bad_tf, bad_shift, bad_id = [], [], []
    codes = [StationaryCode.majority(1), StationaryCode.shift(1), StationaryCode.permutation({1: 2, 2: 3, 3: 1})]
    for t in range(trials):
        n = int(gen.integers(5, 30))
        x = gen.integers(1, 4, size=n)
        f = gen.integers(1, 4, size=n)
        name = expand_tf_name(x, f)
        if not np.array_equal(delete_filler(name).data, x) or len(name) != int(f.sum()) or (name.data == H).sum() != int(f.sum() - n):
            bad_tf.append(t)
        for code in codes:
            a = apply_code(code, x).data
            b = apply_code(code, x[1:]).data
            if not np.array_equal(a[1:], b):
                bad_shift.append((t, code.name))
        if not np.array_equal(apply_code(StationaryCode.identity(), x).data, x):
            bad_id.append(t)
    return [
        CheckReport("code-tf-roundtrip", {"seed": seed, "trials": trials}, len(bad_tf), 0, status_of(not bad_tf)),
        CheckReport("code-shift-commute", {"seed": seed, "trials": trials}, len(bad_shift), 0, status_of(not bad_shift),
                    witness=bad_shift[0] if bad_shift else None),
        CheckReport("code-identity", {"seed": seed, "trials": trials}, len(bad_id), 0, status_of(not bad_id)),
    ]


SUITES = {
    "fbar": lambda seed: suite_fbar(seed),
    "facts": lambda seed: suite_facts(seed),
    "block": lambda seed: suite_block(seed),
    "feldman": lambda seed: suite_feldman_accounting(10 ** 5) + suite_feldman_baselines(),
    "builder": lambda seed: suite_builder(),
    "faithful": lambda seed: suite_faithful(),
    "circular": lambda seed: suite_circular(2000, seed=seed) + suite_circular_fbar(),
    "odometer": lambda seed: suite_odometer(seed),
    "codes": lambda seed: suite_codes(seed),
}


def run_suite(name: str, seed: int) -> list[CheckReport]:
    return SUITES[name](seed)
