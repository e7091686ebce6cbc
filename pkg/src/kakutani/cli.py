"""Command-line front door.

Every command produces ``CheckReport`` records, written as JSON lines (or
CSV) followed by a summary.  Exit status: 0 when nothing failed, 1 when a
check failed, 2 for configuration errors.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import click

from . import baselines
from . import builder as bd
from . import circular as cc
from . import fbar as fb
from . import feldman as fd
from . import harness
from .errors import BaselineMismatch, BaselineMissing, ConfigInvalid, FaithfulInfeasible, KakutaniError
from .reports import FAIL, PASS, CheckReport, jsonable, status_of, summarize
from .symbols import parse_string
from .trees import TreeTrunc
from .words import DEFAULT_EXPAND_CAP

KINDS = ("fbar", "feldman", "build", "circular", "verify-all")

_SCHEMA = {
    "fbar": {"required": {"a", "b"}, "optional": {"backend"}},
    "feldman": {"required": {"T", "N", "M"}, "optional": {"j", "k", "schedule"}},
    "build": {"required": {"tree"}, "optional": {"stages", "mode", "toy_params", "out_dir"}},
    "circular": {"required": {"pairs"}, "optional": {"wrap"}},
    "verify-all": {"required": set(), "optional": {"suites"}},
}


@dataclass
class ExperimentConfig:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigInvalid(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not isinstance(self.params, dict):
            raise ConfigInvalid("params must be an object")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigInvalid("seed must be an integer in [0, 2^64)")
        schema = _SCHEMA[self.kind]
        missing = schema["required"] - set(self.params)
        extra = set(self.params) - schema["required"] - schema["optional"]
        if missing or extra:
            raise ConfigInvalid(f"{self.kind} params: missing {sorted(missing)}, unknown {sorted(extra)}")
        return self

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict) or "kind" not in data:
            raise ConfigInvalid("a config is an object with at least a 'kind'")
        extra = set(data) - {"kind", "params", "seed", "output"}
        if extra:
            raise ConfigInvalid(f"unknown config keys {sorted(extra)}")
        return cls(data["kind"], data.get("params", {}), data.get("seed", 0), data.get("output")).validate()


# --------------------------------------------------------------------------
# execution


def _load_tree(spec: str) -> TreeTrunc:
    """A tree from a file path, a bundled corpus name, or inline text."""
    try:
        path = Path(spec)
        if path.is_file():
            return TreeTrunc.load(path)
        corpus = harness.bundled_trees()
        if spec in corpus or f"{spec}.txt" in corpus:
            return corpus.get(spec) or corpus[f"{spec}.txt"]
        return TreeTrunc.from_text(spec.replace(";", "\n"))
    except (ValueError, OSError) as exc:
        raise ConfigInvalid(f"cannot read tree {spec!r}: {exc}") from exc


def _run_fbar(p: dict, cap: int) -> list[CheckReport]:
    try:
        a, b = parse_string(p["a"]), parse_string(p["b"])
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc
    if len(a) + len(b) > cap:
        raise ConfigInvalid("strings exceed the expansion cap")
    value = fb.fbar(a, b, backend=p.get("backend", "auto"))
    return [CheckReport("fbar", {"a": p["a"], "b": p["b"], "backend": p.get("backend", "auto")}, value, None, PASS)]


def _run_feldman(p: dict, cap: int) -> list[CheckReport]:
    try:
        spec = fd.FeldmanSpec.with_symbols(int(p["T"]), int(p["N"]), int(p["M"]), schedule=p.get("schedule", "geometric"))
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    j, k = int(p.get("j", 1)), int(p.get("k", 2))
    out = []
    if spec.pattern_length() <= cap:
        for idx in sorted({j, k}):
            got = fd.count_accounting(spec, idx, cap)
            want = {"length": spec.pattern_length(), "occurrences": [spec.block_occurrences()] * spec.N,
                    "cycles": spec.cycle_count(idx)}
            out.append(CheckReport("Lemma-5.1-accounting", {"spec": spec.fingerprint(), "j": idx}, got, want,
                                   status_of(got == want)))
    baseline = None
    if spec.T == 1 and spec.M == 2 and (j, k) == (1, 2) and spec.schedule == "geometric":
        try:
            baseline = baselines.lookup(baselines.feldman_instance(spec.T, spec.N, spec.M).fingerprint, "feldman")
        except BaselineMissing:
            baseline = None
    if j != k:
        out.append(fd.verify_different_patterns(spec, j, k, baseline=baseline))
    return out


def _write_stage(out_dir: Path, ws, tree: TreeTrunc) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"W{ws.level}.json").write_text(ws.dumps(include_parent_chain=False) + "\n")


def _run_build(p: dict, cap: int) -> list[CheckReport]:
    tree = _load_tree(str(p["tree"]))
    mode = p.get("mode", "toy")
    if mode not in ("toy", "faithful"):
        raise ConfigInvalid("mode must be toy or faithful")
    stages = int(p.get("stages", tree.horizon))
    if stages < 1 or tree.horizon < 1:
        raise ConfigInvalid("a build needs at least one stage")
    try:
        params = bd.load_toy_params(p.get("toy_params")) if mode == "toy" else None
    except (KeyError, ValueError) as exc:
        raise ConfigInvalid(f"unknown toy parameter set: {exc}") from exc
    if params is not None and params.max_stage is not None and stages > params.max_stage:
        raise ConfigInvalid(f"parameter set {params.name!r} only supports stages <= {params.max_stage}")
    ledger = bd.ParameterLedger(mode=mode)
    try:
        ws = bd.psi_construct(tree, stages, mode, params, ledger=ledger)
    except FaithfulInfeasible as exc:
        return [CheckReport("faithful-feasibility", {"tree": tree.to_text().split(), "mode": mode},
                            jsonable(exc.report), "feasible", FAIL, details=[str(exc)])]
    out = []
    for w in ws[1:]:
        if w.count * w.k > cap:
            raise ConfigInvalid(f"stage {w.level} exceeds the expansion cap")
        out.extend(bd.verify_stage(w, tree))
    if p.get("out_dir"):
        d = Path(p["out_dir"])
        for w in ws:
            _write_stage(d, w, tree)
        (d / "ledger.json").write_text(json.dumps(jsonable(ledger.to_json()), indent=2, sort_keys=True) + "\n")
    return out


def _run_circular(p: dict, cap: int) -> list[CheckReport]:
    try:
        params = cc.CircularParams(tuple(tuple(x) for x in p["pairs"]))
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(f"bad circular pairs: {exc}") from exc
    if params.horizon < 1:
        raise ConfigInvalid("need at least one (k, l) pair")
    if params.q(params.horizon) > cap:
        raise ConfigInvalid(f"q_{params.horizon} = {params.q(params.horizon)} exceeds the expansion cap")
    wrap = p.get("wrap", "q")
    if wrap not in cc.WRAP_READINGS:
        raise ConfigInvalid(f"wrap must be one of {cc.WRAP_READINGS}")
    return cc.identity_checks(params, wrap=wrap)


def _suite_task(args: tuple[str, int]) -> list[CheckReport]:
    name, seed = args
    return harness.run_suite(name, seed)


def _run_verify(p: dict, seed: int, jobs: int) -> list[CheckReport]:
    suites = p.get("suites") or list(harness.SUITES)
    unknown = [s for s in suites if s not in harness.SUITES]
    if unknown:
        raise ConfigInvalid(f"unknown suites {unknown}; choose from {list(harness.SUITES)}")
    tasks = [(s, seed) for s in suites]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_suite_task, tasks))
    else:
        results = [_suite_task(t) for t in tasks]
    return [r for batch in results for r in batch]


def run(config: ExperimentConfig, jobs: int = 1, cap: int = DEFAULT_EXPAND_CAP) -> list[CheckReport]:
    """Execute a validated config; reports are sorted by check ID."""
    config.validate()
    p = config.params
    if config.kind == "fbar":
        reps = _run_fbar(p, cap)
    elif config.kind == "feldman":
        reps = _run_feldman(p, cap)
    elif config.kind == "build":
        reps = _run_build(p, cap)
    elif config.kind == "circular":
        reps = _run_circular(p, cap)
    else:
        reps = _run_verify(p, config.seed, jobs)
    return sorted(reps, key=lambda r: r.check_id)


# --------------------------------------------------------------------------
# output


def _record(rep: CheckReport, seed: int) -> dict:
    return {**rep.to_json(), "seed": seed}


def render(reports: list[CheckReport], seed: int, fmt: str) -> tuple[str, str]:
    """Report body (JSON lines or CSV) and the summary JSON."""
    rows = [_record(r, seed) for r in reports]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check_id", "status", "lhs", "rhs", "params", "witness", "seed"])
        for r in rows:
            w.writerow([r["check_id"], r["status"], json.dumps(r["lhs"], sort_keys=True),
                        json.dumps(r["rhs"], sort_keys=True), json.dumps(r["params"], sort_keys=True),
                        json.dumps(r.get("witness"), sort_keys=True), seed])
        body = buf.getvalue()
    else:
        body = "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
    summary = {**summarize(reports), "seed": seed}
    return body, json.dumps(summary, sort_keys=True) + "\n"


def emit(reports: list[CheckReport], seed: int, fmt: str, output: str | None) -> int:
    body, summary = render(reports, seed, fmt)
    if output:
        out = Path(output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(body)
        out.with_name(out.name + ".summary.json").write_text(summary)
    else:
        sys.stdout.write(body)
    sys.stdout.write(summary)
    failing = [r.check_id for r in reports if r.status == FAIL]
    if failing:
        click.echo(f"failing checks: {', '.join(sorted(set(failing)))}", err=True)
        return 1
    return 0


# --------------------------------------------------------------------------
# click commands


@dataclass
class _Globals:
    seed: int
    jobs: int
    output: str | None
    fmt: str
    cap: int


def _execute(ctx: click.Context, kind: str, params: dict) -> None:
    g: _Globals = ctx.obj
    try:
        cfg = ExperimentConfig(kind, params, g.seed, g.output).validate()
        reports = run(cfg, g.jobs, g.cap)
    except ConfigInvalid as exc:
        click.echo(f"ConfigInvalid: {exc}", err=True)
        ctx.exit(2)
        return
    except KakutaniError as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        ctx.exit(1)
        return
    ctx.exit(emit(reports, g.seed, g.fmt, g.output))


@click.group()
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=0, show_default=True)
@click.option("--jobs", type=click.IntRange(1), default=None, help="Worker processes (default: logical cores).")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Report file; a .summary.json is written next to it.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--expand-cap", type=click.IntRange(1), default=DEFAULT_EXPAND_CAP, show_default=True)
@click.pass_context
def main(ctx: click.Context, seed: int, jobs: int | None, output: str | None, fmt: str, expand_cap: int) -> None:
    """f-bar metrics, Feldman patterns, tree-indexed constructions and circular systems."""
    ctx.obj = _Globals(seed, jobs or os.cpu_count() or 1, output, fmt, expand_cap)


@main.command("fbar")
@click.argument("a")
@click.argument("b")
@click.option("--backend", type=click.Choice(("auto",) + fb.BACKENDS), default="auto")
@click.pass_context
def fbar_cmd(ctx, a: str, b: str, backend: str) -> None:
    """f-bar distance between two space-separated symbol strings."""
    _execute(ctx, "fbar", {"a": a, "b": b, "backend": backend})


@main.command("feldman")
@click.option("-T", "T", type=int, default=1, show_default=True)
@click.option("-N", "N", type=int, required=True)
@click.option("-M", "M", type=int, default=2, show_default=True)
@click.option("-j", "j", type=int, default=1, show_default=True)
@click.option("-k", "k", type=int, default=2, show_default=True)
@click.option("--schedule", type=click.Choice(fd.SCHEDULES), default="geometric", show_default=True)
@click.pass_context
def feldman_cmd(ctx, T, N, M, j, k, schedule) -> None:
    """Pattern accounting and the f-bar between patterns j and k."""
    _execute(ctx, "feldman", {"T": T, "N": N, "M": M, "j": j, "k": k, "schedule": schedule})


@main.command("build")
@click.argument("tree")
@click.option("--stages", type=int, default=None, help="Build stages 1..STAGES (default: the tree horizon).")
@click.option("--mode", type=click.Choice(["toy", "faithful"]), default="toy", show_default=True)
@click.option("--toy-params", default=None, help="Bundled toy parameter set name.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Write word sets and the ledger here.")
@click.pass_context
def build_cmd(ctx, tree, stages, mode, toy_params, out_dir) -> None:
    """Build and verify the system for TREE (a file, a bundled corpus name or inline nodes)."""
    params = {"tree": tree, "mode": mode}
    for key, val in (("stages", stages), ("toy_params", toy_params), ("out_dir", out_dir)):
        if val is not None:
            params[key] = val
    _execute(ctx, "build", params)


@main.command("circular")
@click.argument("pairs", nargs=-1, required=True)
@click.option("--wrap", type=click.Choice(cc.WRAP_READINGS), default="q", show_default=True,
              help="Reading of j_{q_n} in the reversed operator.")
@click.pass_context
def circular_cmd(ctx, pairs, wrap) -> None:
    """Identity checks for coefficients given as K,L pairs, e.g. ``2,3 2,4``."""
    try:
        parsed = [[int(v) for v in p.split(",")] for p in pairs]
    except ValueError:
        click.echo("ConfigInvalid: pairs look like K,L", err=True)
        ctx.exit(2)
        return
    _execute(ctx, "circular", {"pairs": parsed, "wrap": wrap})


@main.command("verify")
@click.option("--suite", "suites", multiple=True, type=click.Choice(list(harness.SUITES)),
              help="Restrict to these suites (repeatable).")
@click.pass_context
def verify_cmd(ctx, suites) -> None:
    """Run the verification suites on the bundled toy corpus."""
    _execute(ctx, "verify-all", {"suites": list(suites)} if suites else {})


@main.command("run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def run_cmd(ctx, config) -> None:
    """Execute an ExperimentConfig JSON file."""
    g: _Globals = ctx.obj
    try:
        data = json.loads(Path(config).read_text())
        cfg = ExperimentConfig.from_json(data)
    except (json.JSONDecodeError, ConfigInvalid) as exc:
        click.echo(f"ConfigInvalid: {exc}", err=True)
        ctx.exit(2)
        return
    ctx.obj = _Globals(cfg.seed, g.jobs, cfg.output or g.output, g.fmt, g.cap)
    _execute(ctx, cfg.kind, cfg.params)


@main.group("baseline")
def baseline_group() -> None:
    """Record or check oracle baselines (directory overridable via KF_BASELINE_DIR)."""


@baseline_group.command("record")
@click.argument("suite", type=click.Choice(sorted(baselines.SUITES)))
def baseline_record(suite: str) -> None:
    path = baselines.record(suite)
    click.echo(json.dumps({"suite": suite, "path": str(path)}))


@baseline_group.command("check")
@click.argument("suite", type=click.Choice(sorted(baselines.SUITES)))
@click.option("--feldman-spec", "spec", default=None, metavar="T,N,M",
              help="Check this single Feldman instance instead of the whole suite.")
@click.pass_context
def baseline_check(ctx, suite: str, spec: str | None) -> None:
    instances = None
    if spec:
        try:
            T, N, M = (int(v) for v in spec.split(","))
        except ValueError:
            click.echo("ConfigInvalid: --feldman-spec wants T,N,M", err=True)
            ctx.exit(2)
            return
        instances = [baselines.feldman_instance(T, N, M)]
    try:
        rows = baselines.check(suite, instances=instances)
    except BaselineMissing as exc:
        click.echo(f"BaselineMissing: {exc}", err=True)
        ctx.exit(2)
        return
    except BaselineMismatch as exc:
        click.echo(json.dumps({"error": "BaselineMismatch", "message": str(exc), "diff": exc.diff}, sort_keys=True))
        ctx.exit(1)
        return
    for fp, value in rows:
        click.echo(json.dumps({"fingerprint": fp, "value": str(Fraction(value)), "status": "pass"}, sort_keys=True))


if __name__ == "__main__":  # pragma: no cover
    main()
