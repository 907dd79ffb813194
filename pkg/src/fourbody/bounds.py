"""Keplerian action estimates and the collision lower bounds g1, g2.

Every collision path in the E1 (resp. E2) class has action at least g1(theta)
(resp. g2(theta)) for theta in (0, pi/10]. The per-case functions below are the
final estimates of the case analysis; g1 and g2 are their minima.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import OutOfRange
from .geometry import Variant

PI = math.pi
CUBE_ROOT_16 = np.cbrt(16.0)
THETA_MAX = PI / 10


def _p23(x):
    """x^(2/3) as cbrt(x)^2, safe at x = 0."""
    r = np.cbrt(x)
    return r * r


@dataclass(frozen=True)
class KeplerParams:
    mu: float
    alpha: float
    theta: float
    T: float

    def __post_init__(self):
        if not (self.mu > 0 and self.alpha > 0 and self.T > 0):
            raise ValueError("mu, alpha and T must be positive")
        if not (0 < self.theta <= PI):
            raise OutOfRange(f"theta must lie in (0, pi], got {self.theta}")


def kepler_lower_bound(p: KeplerParams, collision=False) -> float:
    """Infimum of the Kepler action over paths whose endpoints subtend theta in time T.

    With ``collision=True`` the bound for paths through a collision, where the
    angle is effectively pi.
    """
    angle = PI if collision else p.theta
    return 1.5 * float(np.cbrt(p.mu * p.alpha ** 2 * angle ** 2 * p.T))


def total_collision_bound() -> float:
    """Lower bound on the action of any path ending in a total collision (all six pairs)."""
    return 6 / 4 * kepler_lower_bound(KeplerParams(1.0, 4.0, PI, 1.0))


def _check_theta(theta):
    t = np.asarray(theta, dtype=float)
    if np.any(~((t > 0) & (t <= THETA_MAX * (1 + 1e-15)))):
        raise OutOfRange("theta must lie in (0, pi/10]")
    return t


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def g1(theta):
    t = _check_theta(theta)
    return _out(3 / 8 * CUBE_ROOT_16 * (np.cbrt(2 * PI ** 2) + 2 * _p23(2 * t)))


def g2(theta):
    t = _check_theta(theta)
    return _out(3 / 8 * CUBE_ROOT_16 * (_p23(PI) + _p23(t) + 2 * _p23(2 * t)))


def g_for(variant):
    return g1 if Variant.parse(variant) is Variant.E1 else g2


# E2 case 2: the printed estimate carries 3/2 where the surrounding quarter-sum gives 3/8
E2_CASE2_COEFFICIENTS = {"repaired": 3 / 8, "printed": 3 / 2}


def _e1_case1(t):
    return 3 / 16 * CUBE_ROOT_16 * (2 * np.cbrt(2 * PI ** 2) + _p23(PI / 2 + 2 * t)
                                   + _p23(PI / 2 + 3 * t) + _p23(t))


def _e1_case2(t):
    return 3 / 16 * CUBE_ROOT_16 * (2 * np.cbrt(2 * PI ** 2) + _p23(PI / 2 + 2 * t)
                                   + _p23(PI / 2 - 3 * t) + _p23(PI - t))


def _e1_case3(t):
    return 3 / 8 * CUBE_ROOT_16 * (np.cbrt(2 * PI ** 2) + 2 * _p23(2 * t))


def _e1_case4(t):
    return 3 / 8 * CUBE_ROOT_16 * (np.cbrt(2 * PI ** 2) + 2 * _p23(t) + _p23(2 * t))


def _e1_case5(t):
    return 3 / 4 * CUBE_ROOT_16 * _p23(PI) + 0 * t


def _e2_case1(t):
    return 3 / 8 * CUBE_ROOT_16 * (_p23(PI) + _p23(t) + 2 * _p23(2 * t))


def _e2_case2(t, coefficient="repaired"):
    k = E2_CASE2_COEFFICIENTS[coefficient]
    return k * CUBE_ROOT_16 * (_p23(4 * t) + _p23(PI / 2 + t) + _p23(PI))


def _e2_case4(t):
    return 3 / 8 * CUBE_ROOT_16 * (_p23(PI) + _p23(PI / 2 + t) + 2 * _p23(2 * t))


_CASES = {
    Variant.E1: {1: _e1_case1, 2: _e1_case2, 3: _e1_case3, 4: _e1_case4, 5: _e1_case5},
    Variant.E2: {1: _e2_case1, 2: _e2_case2, 3: _e2_case1, 4: _e2_case4},
}


@dataclass(frozen=True)
class CaseBound:
    variant: Variant
    case_id: int

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.case_id not in _CASES[self.variant]:
            raise ValueError(f"{self.variant.value} has no case {self.case_id}")

    def value_at(self, theta, **kw):
        return case_bound(self, theta, **kw)


def case_bounds(variant):
    variant = Variant.parse(variant)
    return [CaseBound(variant, k) for k in sorted(_CASES[variant])]


def case_bound(cb: CaseBound, theta, e2_case2_coefficient="repaired"):
    t = _check_theta(theta)
    fn = _CASES[cb.variant][cb.case_id]
    if fn is _e2_case2:
        return _out(fn(t, e2_case2_coefficient))
    return _out(fn(t))
