"""Residual reports: named checks with tolerances and a stable JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


@dataclass
class Check:
    name: str
    value: float
    tol: float
    tag: str = ""
    expect: str = "below"   # "below": value <= tol passes; "above": value >= tol passes
    meta: dict = field(default_factory=dict)

    @property
    def passed(self):
        v = float(self.value)
        if math.isnan(v):
            return False
        return v <= self.tol if self.expect == "below" else v >= self.tol

    def to_dict(self):
        return _clean({"name": self.name, "value": self.value, "tol": self.tol,
                       "expect": self.expect, "passed": self.passed, "tag": self.tag,
                       "meta": self.meta})


@dataclass
class ResidualReport:
    name: str
    checks: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    notices: list = field(default_factory=list)

    def add(self, name, value, tol, tag="", expect="below", **meta):
        c = Check(name, float(value), float(tol), tag, expect, meta)
        self.checks.append(c)
        return c

    def extend(self, other, prefix=""):
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.value, c.tol, c.tag, c.expect, dict(c.meta)))
        self.notices.extend(other.notices)

    def notice(self, text):
        self.notices.append(text)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name):
        return any(c.name == name for c in self.checks)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return _clean({"name": self.name, "passed": self.passed,
                       "checks": [c.to_dict() for c in self.checks],
                       "notices": list(self.notices), "meta": self.meta})

    def to_json(self):
        return dumps(self.to_dict())

    def summary(self):
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            op = "<=" if c.expect == "below" else ">="
            lines.append(f"  [{'ok' if c.passed else 'FAIL'}] {c.name} = {c.value:.3e} ({op} {c.tol:.1e})")
        lines.extend(f"  note: {n}" for n in self.notices)
        return "\n".join(lines)


def dumps(obj):
    """Deterministic JSON text: insertion-ordered keys, repr floats, trailing newline."""
    return json.dumps(_clean(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n"
