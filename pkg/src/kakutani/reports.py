"""Check reports and their JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

PASS = "pass"
VACUOUS = "vacuous-pass"
FAIL = "fail"


def jsonable(value: Any) -> Any:
    """Convert values to JSON-friendly data; rationals become "p/q" strings."""
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if hasattr(value, "to_json"):
        return value.to_json()
    return str(value)


@dataclass
class CheckReport:
    check_id: str
    params: dict = field(default_factory=dict)
    lhs: Any = None
    rhs: Any = None
    status: str = PASS
    witness: Any = None
    details: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status in (PASS, VACUOUS)

    def to_json(self) -> dict:
        out = {
            "check_id": self.check_id,
            "params": jsonable(self.params),
            "lhs": jsonable(self.lhs),
            "rhs": jsonable(self.rhs),
            "pass": self.passed,
            "status": self.status,
        }
        if self.witness is not None:
            out["witness"] = jsonable(self.witness)
        if self.details:
            out["details"] = jsonable(self.details)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def status_of(ok: bool) -> str:
    return PASS if ok else FAIL


def bound_status(value: Fraction, bound: Fraction, strict: bool = False) -> str:
    """Status for ``value >= bound``; a nonpositive bound counts as vacuous."""
    if bound <= 0:
        return VACUOUS
    ok = value > bound if strict else value >= bound
    return status_of(ok)


def summarize(reports: list[CheckReport]) -> dict:
    counts = {PASS: 0, VACUOUS: 0, FAIL: 0}
    for r in reports:
        counts[r.status] += 1
    failing = sorted({r.check_id for r in reports if r.status == FAIL})
    return {"counts": counts, "total": len(reports), "failing": failing}
