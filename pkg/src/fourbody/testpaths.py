"""Published test-path node tables and the certificate sweep A_test(theta) < g(theta).

Each table gives the positions of bodies 1-3 at t = 0, 0.1, ..., 1 (body 4
follows from the centre of mass). The t = 1 row is stored in the unrotated
frame, so the final node can be rotated to any angle in the table's interval.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import numpy as np

from .action import PolylinePath, polyline_action
from .bounds import g_for
from .errors import Collision, DegenerateSegment, OutOfRange
from .geometry import (RotationAngle, Side, Variant, build_boundary, complete_configuration,
                       fit_boundary)

COLUMNS = ("q1x", "q1y", "q2x", "q2y", "q3x", "q3y")
DEFAULT_STEP = Fraction(1, 10000)


def _apply_rule(raw, rule):
    if rule == "drop-extra-decimal-point":
        i = raw.index(".")
        j = raw.index(".", i + 1)
        return raw[:j] + raw[j + 1:]
    if rule == "decimal-shift-x10":
        return str(Decimal(raw).scaleb(1))
    raise ValueError(f"unknown repair rule {rule!r}")


@dataclass(frozen=True)
class TestPathTable:
    id: str
    variant: Variant
    theta0: RotationAngle
    interval: tuple  # (lo, hi) as Fractions of pi
    times: tuple
    raw: tuple  # printed literals, 11 rows x 6
    nodes_q123: np.ndarray = field(repr=False)  # repaired, shape (11, 3, 2)
    repairs: tuple = ()

    __test__ = False  # not a pytest class

    @property
    def nodes(self):
        """All four bodies, q4 = -(q1 + q2 + q3)."""
        return complete_configuration(self.nodes_q123)

    @property
    def final_row_frame(self):
        return self.nodes[-1]

    def contains(self, frac, closed=False):
        lo, hi = self.interval
        return (lo <= frac if closed else lo < frac) and frac <= hi

    def end_params(self, theta):
        """Boundary params of the unrotated t = 1 row, carried to angle theta."""
        side = Side.end_for(self.variant)
        fit = fit_boundary(self.final_row_frame, side, 0.0)
        return type(fit)(side, fit.a, fit.b, fit.c, theta)

    def start_params(self):
        return fit_boundary(self.nodes[0], Side.START)


@lru_cache(maxsize=None)
def _read_table(table_id) -> TestPathTable:
    pkg = resources.files("fourbody") / "data"
    meta = json.loads((pkg / f"{table_id}.json").read_text())
    text = (pkg / f"{table_id}.csv").read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if tuple(rows[0]) != ("t",) + COLUMNS:
        raise ValueError(f"{table_id}: unexpected header {rows[0]}")
    body = rows[1:]
    repairs = {(r["t"], r["column"]): r for r in meta["repairs"]}
    values = np.empty((len(body), 6))
    for k, row in enumerate(body):
        for c, (col, lit) in enumerate(zip(COLUMNS, row[1:])):
            rep = repairs.pop((row[0], col), None)
            if rep is not None:
                if rep["raw"] != lit or _apply_rule(lit, rep["rule"]) != rep["repaired"]:
                    raise ValueError(f"{table_id}: repair entry for t={row[0]} {col} does not match the data")
                lit = rep["repaired"]
            values[k, c] = float(lit)  # malformed literals without an audit entry fail here
    if repairs:
        raise ValueError(f"{table_id}: unused repair entries {sorted(repairs)}")
    lo, hi = (Fraction(v) for v in meta["interval"])
    return TestPathTable(
        id=meta["id"],
        variant=Variant(meta["variant"]),
        theta0=RotationAngle(Fraction(meta["theta0"])),
        interval=(lo, hi),
        times=tuple(float(r[0]) for r in body),
        raw=tuple(tuple(r[1:]) for r in body),
        nodes_q123=values.reshape(len(body), 3, 2),
        repairs=tuple(meta["repairs"]),
    )


TABLE_IDS = {
    Variant.E1: ("e1-0539", "e1-05", "e1-04", "e1-03", "e1-015", "e1-006", "e1-002"),
    Variant.E2: ("e2-066", "e2-0625", "e2-053", "e2-04", "e2-03", "e2-02", "e2-01", "e2-005", "e2-0012"),
}


def all_tables(variant=None):
    variants = [Variant.parse(variant)] if variant is not None else list(Variant)
    return [_read_table(tid) for v in variants for tid in TABLE_IDS[v]]


def get_table(table_id) -> TestPathTable:
    for ids in TABLE_IDS.values():
        if table_id in ids:
            return _read_table(table_id)
    raise KeyError(f"unknown table id {table_id!r}")


def certified_range(variant):
    """(0, hi] covered by the tables, as Fractions of pi."""
    tables = all_tables(variant)
    return Fraction(0), max(t.interval[1] for t in tables)


def _as_angle(theta):
    if isinstance(theta, RotationAngle):
        return theta
    if isinstance(theta, Fraction):
        return RotationAngle(theta)
    raise TypeError("theta must be a RotationAngle or a Fraction of pi")


def load_table(variant, theta) -> TestPathTable:
    """The table whose half-open interval (lo, hi] contains theta."""
    theta = _as_angle(theta)
    if not theta.is_rational:
        frac = Fraction(theta.radians / np.pi).limit_denominator(10 ** 12)
    else:
        frac = theta.frac
    hits = [t for t in all_tables(variant) if t.contains(frac)]
    if len(hits) != 1:
        lo, hi = certified_range(variant)
        raise OutOfRange(f"theta = {theta} is outside the certified range ({lo}pi, {hi}pi]")
    return hits[0]


def build_test_path(variant, theta, table=None) -> PolylinePath:
    """Nodes 0..9 from the table; node 10 is the stored final row rotated by theta."""
    theta = _as_angle(theta)
    table = table if table is not None else load_table(variant, theta)
    nodes = table.nodes.copy()
    nodes[-1] = build_boundary(table.end_params(theta))
    return PolylinePath(np.array(table.times), nodes)


def evaluate_test_path(variant, theta, table=None) -> float:
    return polyline_action(build_test_path(variant, theta, table)).total


@dataclass(frozen=True)
class CertificateRecord:
    theta: Fraction  # multiple of pi
    table: str | None
    a_test: float
    g: float
    margin: float


@dataclass(frozen=True)
class CertificateReport:
    variant: Variant
    theta_grid: tuple
    records: tuple
    overall_pass: bool
    min_margin: float
    min_margin_theta: Fraction

    def to_json(self):
        return {
            "variant": self.variant.value,
            "overall_pass": self.overall_pass,
            "min_margin": self.min_margin,
            "min_margin_theta": f"{self.min_margin_theta}pi",
            "points": len(self.records),
            "tables": sorted({r.table for r in self.records if r.table}),
            "records": [
                {"theta": f"{r.theta}pi", "table": r.table, "a_test": r.a_test, "g": r.g, "margin": r.margin}
                for r in self.records
            ],
        }


def certificate_sweep(variant, grid_step=DEFAULT_STEP, custom_range=None) -> CertificateReport:
    """Evaluate g(theta) - A_test(theta) over a grid of rational multiples of pi.

    Interval endpoints are always included and are evaluated under every
    table whose closed interval contains them, so seams are checked from both
    sides. Angles no table covers are recorded with margin -inf.
    """
    variant = Variant.parse(variant)
    step = Fraction(grid_step)
    if step <= 0:
        raise ValueError("grid step must be positive")
    lo, hi = (Fraction(0), certified_range(variant)[1]) if custom_range is None else (
        Fraction(custom_range[0]), Fraction(custom_range[1]))
    tables = all_tables(variant)
    grid = {step * k for k in range(int(lo // step), int(hi // step) + 1) if lo < step * k <= hi}
    for t in tables:
        grid.update(e for e in t.interval if lo < e <= hi)
    grid = sorted(grid)
    g = g_for(variant)
    records = []
    for frac in grid:
        users = [t for t in tables if t.contains(frac, closed=True)]
        if not users:
            records.append(CertificateRecord(frac, None, float("nan"), float(g(float(frac) * np.pi))
                                             if float(frac) * np.pi <= np.pi / 10 else float("nan"),
                                             float("-inf")))
            continue
        bound = float(g(float(frac) * np.pi))
        for t in users:
            try:
                a = evaluate_test_path(variant, RotationAngle(frac), t)
            except (Collision, DegenerateSegment):
                a = float("inf")
            records.append(CertificateRecord(frac, t.id, a, bound, bound - a))
    worst = min(records, key=lambda r: r.margin)
    return CertificateReport(
        variant=variant,
        theta_grid=tuple(grid),
        records=tuple(records),
        overall_pass=all(r.margin > 0 for r in records),
        min_margin=worst.margin,
        min_margin_theta=worst.theta,
    )
