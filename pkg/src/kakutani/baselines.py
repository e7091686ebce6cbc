"""Recorded oracle values.

A suite is a fixed list of instances.  ``record`` evaluates each one with the
quadratic DP backend and writes the exact rationals together with a full
parameter fingerprint; ``check`` re-evaluates with the fast backend and
demands bit-exact equality.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from . import fbar as fb
from . import feldman as fd
from .errors import BaselineMismatch, BaselineMissing
from .prng import rng
from .reports import jsonable
from .words import StationaryCode

FORMAT_VERSION = 1


def baseline_dir() -> Path:
    env = os.environ.get("KF_BASELINE_DIR")
    if env:
        return Path(env)
    return Path(str(resources.files("kakutani") / "data" / "baselines"))


def fingerprint_hash(fp: dict) -> str:
    blob = json.dumps(jsonable(fp), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.blake2b(blob, digest_size=16).hexdigest()


@dataclass(frozen=True)
class Instance:
    fingerprint: dict
    strings: Callable[[], tuple[np.ndarray, np.ndarray]]


def feldman_instance(T: int, N: int, M: int, j: int = 1, k: int = 2) -> Instance:
    spec = fd.FeldmanSpec.with_symbols(T, N, M)
    fp = {"kind": "feldman-pair", "spec": spec.fingerprint(), "j": j, "k": k, "windows": "full"}
    return Instance(fp, lambda: (fd.feldman_pattern(spec, j, "rle"), fd.feldman_pattern(spec, k, "rle")))


def coding_toy_blocks(z: int, N: int, q: int, seed: int = 0):
    """Disjoint single symbols per ``m`` for B, ``A_{ij} = 1 + (i+j) mod N``, seeded Lambdas."""
    b = np.empty((z, N, q, 1), dtype=np.int64)
    for m in range(N):
        b[:, m, :, 0] = m + 1
    a = np.array([[[1 + (i + j) % N] for j in range(q)] for i in range(z)], dtype=np.int64)
    gen = rng(seed, "coding-lemma")
    perms = np.array([[gen.permutation(q) for _ in range(N)] for _ in range(z)], dtype=np.int64)
    return b, a, perms


def coding_toy_code(N: int) -> StationaryCode:
    return StationaryCode.permutation({s: s % N + 1 for s in range(1, N + 1)})


def coding_instance(z: int, N: int, q: int, seed: int = 0, coded: bool = True) -> Instance:
    fp = {"kind": "coding-lemma", "z": z, "N": N, "q": q, "L": 1, "seed": seed,
          "code": "cyclic-permutation" if coded else "identity", "windows": "full"}

    def strings():
        b, a, perms = coding_toy_blocks(z, N, q, seed)
        code = coding_toy_code(N) if coded else None
        inst = fd.coding_lemma_strings(z, N, q, 1, b, a, perms, code)
        return inst.A, inst.B

    return Instance(fp, strings)


SUITES: dict[str, Callable[[], list[Instance]]] = {
    "feldman": lambda: [feldman_instance(1, N, 2) for N in (3, 4, 5, 6)],
    "coding": lambda: [coding_instance(4, 4, 4, coded=True), coding_instance(4, 4, 4, coded=False)],
}


def _path(suite: str, directory: Path | None) -> Path:
    return (directory or baseline_dir()) / f"{suite}.json"


def _evaluate(inst: Instance, backend: str) -> Fraction:
    a, b = inst.strings()
    if backend == "dp":
        a = a.expand() if hasattr(a, "expand") else a
        b = b.expand() if hasattr(b, "expand") else b
    return fb.fbar(a, b, backend=backend)


def record(suite: str, directory: Path | None = None, instances: list[Instance] | None = None) -> Path:
    """Evaluate the suite (or the given instances) with the DP backend and store it."""
    if suite not in SUITES and instances is None:
        raise BaselineMissing(f"no suite named {suite!r}")
    entries = []
    for inst in instances if instances is not None else SUITES[suite]():
        value = _evaluate(inst, "dp")
        entries.append({
            "fingerprint": jsonable(inst.fingerprint),
            "hash": fingerprint_hash(inst.fingerprint),
            "value": jsonable(value),
            "backend": "dp",
        })
    path = _path(suite, directory)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"format": FORMAT_VERSION, "suite": suite, "entries": entries}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def load(suite: str, directory: Path | None = None) -> dict[str, dict]:
    path = _path(suite, directory)
    if not path.exists():
        raise BaselineMissing(f"no baseline file {path}")
    doc = json.loads(path.read_text())
    return {e["hash"]: e for e in doc["entries"]}


def lookup(fingerprint: dict, suite: str, directory: Path | None = None) -> Fraction:
    stored = load(suite, directory)
    h = fingerprint_hash(fingerprint)
    if h not in stored:
        raise BaselineMissing(f"no baseline for fingerprint {fingerprint}")
    return Fraction(stored[h]["value"])


def _delta(fp: dict, stored: list[dict]) -> dict:
    """Keys where ``fp`` differs from the closest stored fingerprint."""
    fp = jsonable(fp)

    def diff(other):
        keys = set(fp) | set(other)
        return {k: {"stored": other.get(k), "given": fp.get(k)} for k in sorted(keys) if fp.get(k) != other.get(k)}

    return min((diff(s) for s in stored), key=len, default={"given": fp})


def check(
    suite: str,
    directory: Path | None = None,
    instances: list[Instance] | None = None,
    backend: str = "rle",
) -> list[tuple[dict, Fraction]]:
    """Re-evaluate the suite; raise ``BaselineMismatch`` on any difference."""
    if suite not in SUITES and instances is None:
        raise BaselineMissing(f"no suite named {suite!r}")
    stored = load(suite, directory)
    out = []
    for inst in instances if instances is not None else SUITES[suite]():
        h = fingerprint_hash(inst.fingerprint)
        if h not in stored:
            delta = _delta(inst.fingerprint, [e["fingerprint"] for e in stored.values()])
            raise BaselineMismatch(f"fingerprint not recorded in suite {suite!r}", diff={"fingerprint": delta})
        value = _evaluate(inst, backend)
        want = Fraction(stored[h]["value"])
        if value != want:
            raise BaselineMismatch(
                f"value changed for {inst.fingerprint}",
                diff={"stored": jsonable(want), "computed": jsonable(value)},
            )
        out.append((inst.fingerprint, value))
    return out
