"""Audit record for one numerically instantiated inequality."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["InequalityReport", "reports_to_csv", "reports_to_json"]

#: Conventions every report carries, so the discretization choices are
#: auditable instead of implicit.
STENCIL_TAG = "staggered-forward/cell-centered-nested"
BALL_RULE_TAG = "indicator-at-cell-center"


@dataclass
class InequalityReport:
    """LHS, RHS breakdown and the measured stand-in for the generic constant.

    ``rhs_terms`` holds each right-hand side term with its structural
    weights (powers of q, index weights, inverse gap powers) but with the
    non-explicit constant set to 1; their sum is exactly the RHS used for
    the pass flag.  ``implied_constant`` is LHS / sum(rhs_terms), the
    measured ratio tracked in place of the untracked constant.
    """

    name: str
    lhs: float
    rhs_terms: dict[str, float]
    budget: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs_terms = {k: float(v) for k, v in self.rhs_terms.items()}
        self.metadata = dict(self.metadata)
        self.metadata.setdefault("stencil", STENCIL_TAG)
        self.metadata.setdefault("ball_rule", BALL_RULE_TAG)

    @property
    def rhs_total(self) -> float:
        return float(sum(self.rhs_terms.values()))

    @property
    def implied_constant(self) -> float:
        if self.lhs == 0.0:
            return 0.0
        total = self.rhs_total
        if total <= 0.0:
            return math.inf
        return self.lhs / total

    @property
    def passes(self) -> bool:
        c = self.implied_constant
        if self.budget is None:
            return math.isfinite(c)
        return c <= self.budget

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs_terms": self.rhs_terms,
            "rhs_total": self.rhs_total,
            "implied_constant": self.implied_constant,
            "budget": self.budget,
            "passes": self.passes,
            "metadata": self.metadata,
        }


def _atomic_write(path: Path, text: str):
    # report bundles are written whole or not at all
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def reports_to_json(reports, path) -> Path:
    path = Path(path)
    _atomic_write(path, json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")
    return path


def reports_to_csv(reports, path) -> Path:
    """Flat CSV: one row per report with the headline numbers and tags."""
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["name", "lhs", "rhs_total", "implied_constant", "passes", "budget", "spacing", "radii", "exponents"]
    )
    for r in reports:
        md = r.metadata
        writer.writerow(
            [
                r.name,
                repr(r.lhs),
                repr(r.rhs_total),
                repr(r.implied_constant),
                int(r.passes),
                "" if r.budget is None else repr(r.budget),
                json.dumps(md.get("spacing", [])),
                json.dumps(md.get("radii", [])),
                json.dumps(md.get("exponents", {}), sort_keys=True),
            ]
        )
    _atomic_write(path, buf.getvalue())
    return path
