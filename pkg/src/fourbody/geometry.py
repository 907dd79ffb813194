"""Configurations, rotations and the structured boundary families.

Configurations are 4x2 arrays whose rows are the planar positions of the four
unit masses. Rotations act on the right: ``config @ rotation(theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import combinations

import numpy as np

PAIRS = tuple(combinations(range(4), 2))
B_REFLECT = np.diag([1.0, -1.0])
COM_TOL = 1e-12


class Variant(str, Enum):
    E1 = "E1"
    E2 = "E2"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        return cls(str(text).upper())


class Side(str, Enum):
    START = "Start"
    END_E1 = "EndE1"
    END_E2 = "EndE2"

    @classmethod
    def end_for(cls, variant):
        return cls.END_E1 if Variant.parse(variant) is Variant.E1 else cls.END_E2


@dataclass(frozen=True)
class RotationAngle:
    """An angle stored as an exact multiple ``frac`` of pi.

    Angles that are not rational multiples of pi are carried with
    ``frac=None`` and an explicit real value; they only matter for period
    classification.
    """

    frac: Fraction | None
    real: float | None = None

    def __post_init__(self):
        if self.frac is None:
            if self.real is None or not math.isfinite(self.real):
                raise ValueError("irrational angle needs a finite real value")
        else:
            object.__setattr__(self, "frac", Fraction(self.frac))

    @classmethod
    def pi_fraction(cls, p, q=1):
        return cls(Fraction(p, q))

    @classmethod
    def irrational(cls, radians):
        return cls(None, float(radians))

    @classmethod
    def parse(cls, text):
        """Parse ``'<p>/<q>pi'``, ``'<p>pi'`` or a plain ``'0'``."""
        s = str(text).strip().replace(" ", "")
        if s.endswith("pi"):
            body = s[:-2] or "1"
            if body in ("+", "-"):
                body += "1"
            return cls(Fraction(body))
        if Fraction(s) == 0:
            return cls(Fraction(0))
        raise ValueError(f"angle must be written as <p>/<q>pi, got {text!r}")

    @property
    def p(self):
        return None if self.frac is None else self.frac.numerator

    @property
    def q(self):
        return None if self.frac is None else self.frac.denominator

    @property
    def is_rational(self):
        return self.frac is not None

    @property
    def radians(self) -> float:
        if self.frac is None:
            return self.real
        return float(self.frac) * math.pi

    def __float__(self):
        return self.radians

    def scaled(self, k):
        """The angle k*theta, reduced modulo 2pi when rational."""
        if self.frac is None:
            return RotationAngle.irrational(k * self.real)
        f = self.frac * k
        return RotationAngle(f - 2 * math.floor(f / 2))

    def __str__(self):
        if self.frac is None:
            return f"{self.real!r}"
        return f"{self.frac.numerator}/{self.frac.denominator}pi"


def _angle_radians(theta) -> float:
    return theta.radians if isinstance(theta, RotationAngle) else float(theta)


def rotation(theta) -> np.ndarray:
    """Right-acting rotation matrix [[cos, sin], [-sin, cos]]."""
    if isinstance(theta, RotationAngle) and theta.frac is not None:
        f = theta.frac - 2 * math.floor(theta.frac / 2)
        # exact values on the quarter turns keep symmetry checks bit-clean
        quarter = {Fraction(0): (1.0, 0.0), Fraction(1, 2): (0.0, 1.0),
                   Fraction(1): (-1.0, 0.0), Fraction(3, 2): (0.0, -1.0)}
        if f in quarter:
            c, s = quarter[f]
            return np.array([[c, s], [-s, c]])
    t = _angle_radians(theta)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class BoundaryParams:
    side: Side
    a: float
    b: float
    c: float
    theta: RotationAngle | float | None = None

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))
        if not (self.b >= 0 and self.c >= 0):
            raise ValueError(f"boundary parameters need b >= 0 and c >= 0, got b={self.b}, c={self.c}")
        if self.side is not Side.START and self.theta is None:
            raise ValueError("end boundaries need a rotation angle")

    @property
    def abc(self):
        return np.array([self.a, self.b, self.c], dtype=float)


# Each family is linear in (a, b, c): flattened config = M @ (a, b, c).
_START_MAP = np.array([
    [-1, 0, -1], [0, 0, 0],
    [-1, 0, 0], [0, 0, 0],
    [1, 0, 0.5], [0, 1, 0],
    [1, 0, 0.5], [0, -1, 0],
], dtype=float)
_E1_MAP = np.array([
    [0, -1, 0], [-1, 0, 0],
    [0, 0, -1], [1, 0, 0],
    [0, 0, 1], [1, 0, 0],
    [0, 1, 0], [-1, 0, 0],
], dtype=float)
_E2_MAP = np.array([
    [-1, 0, 0], [0, -1, 0],
    [-1, 0, 0], [0, 1, 0],
    [1, 0, 0], [0, 0, 1],
    [1, 0, 0], [0, 0, -1],
], dtype=float)


def boundary_map(side, theta=None) -> np.ndarray:
    """The 8x3 matrix taking (a, b, c) to the flattened boundary configuration."""
    side = Side(side)
    if side is Side.START:
        return _START_MAP.copy()
    base = _E1_MAP if side is Side.END_E1 else _E2_MAP
    R = rotation(theta)
    # rows (x, y) of each body map to (x, y) @ R
    return np.einsum("bik,ij->bjk", base.reshape(4, 2, 3), R).reshape(8, 3)


def build_boundary(params: BoundaryParams) -> np.ndarray:
    side = params.side
    a, b, c = params.a, params.b, params.c
    if side is Side.START:
        m = (2 * a + c) / 2
        return np.array([[-a - c, 0.0], [-a, 0.0], [m, b], [m, -b]])
    if side is Side.END_E1:
        rows = np.array([[-b, -a], [-c, a], [c, a], [b, -a]], dtype=float)
    else:
        rows = np.array([[-a, -b], [-a, b], [a, c], [a, -c]], dtype=float)
    return rows @ rotation(params.theta)


def fit_boundary(config, side, theta=None, project=True) -> BoundaryParams:
    """Least-squares (a, b, c) for a configuration near a boundary family."""
    M = boundary_map(side, theta)
    abc, *_ = np.linalg.lstsq(M, np.asarray(config, dtype=float).reshape(8), rcond=None)
    a, b, c = (float(v) for v in abc)
    if project:
        b, c = max(b, 0.0), max(c, 0.0)
    return BoundaryParams(Side(side), a, b, c, theta)


def family_residual(config, side, theta=None) -> float:
    """Max deviation of a configuration from its least-squares family member."""
    M = boundary_map(side, theta)
    x = np.asarray(config, dtype=float).reshape(8)
    abc, *_ = np.linalg.lstsq(M, x, rcond=None)
    return float(np.max(np.abs(M @ abc - x)))


def check_configuration(config, tol=COM_TOL) -> np.ndarray:
    q = np.asarray(config, dtype=float)
    if q.shape != (4, 2):
        raise ValueError(f"configuration must be 4x2, got {q.shape}")
    if np.max(np.abs(q.sum(axis=0))) > tol:
        raise ValueError("configuration centre of mass is not at the origin")
    return q


def complete_configuration(q123) -> np.ndarray:
    """Append q4 = -(q1 + q2 + q3)."""
    q = np.asarray(q123, dtype=float)
    return np.concatenate([q, -q.sum(axis=-2, keepdims=True)], axis=-2)


def min_pair_distance(config, *, one_based=True):
    """Smallest pairwise distance and its pair; ties go to the first pair in lexicographic order."""
    q = np.asarray(config, dtype=float)
    best, best_pair = math.inf, None
    for i, j in PAIRS:
        d = math.hypot(*(q[i] - q[j]))
        if d < best:
            best, best_pair = d, (i, j)
    if one_based:
        best_pair = (best_pair[0] + 1, best_pair[1] + 1)
    return best, best_pair


def is_collision_free(config, tol=1e-8) -> bool:
    return min_pair_distance(config)[0] >= tol
