"""Extension of a minimizer on [0, 1] to the whole real line.

Both variants extend by a two-unit step map T acting on the path on [0, 2]:

    E1:  q(t + 2) = -P q(t) R(2 theta),  P relabels bodies (1, 2, 3, 4) <- (3, 4, 2, 1)
    E2:  q(t + 2) =  P q(t) R(2 theta),  P relabels bodies (1, 2, 3, 4) <- (2, 1, 3, 4)

and on [1, 2] the path is the time-reflected base path:

    E1:  q(t) = -(q4, q3, q2, q1)(2 - t) B R(2 theta)
    E2:  q(t) =  (q2, q1, q4, q3)(2 - t) B R(2 theta)

with B = diag(1, -1). Applying T four times (E1) or twice (E2) gives
q(t + 8) = q(t) R(8 theta) and q(t + 4) = q(t) R(4 theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .action import PAIRS, PolylinePath
from .errors import EndpointCollision
from .geometry import B_REFLECT, RotationAngle, Variant, min_pair_distance, rotation

_STEP_PERM = {Variant.E1: np.array([2, 3, 1, 0]), Variant.E2: np.array([1, 0, 2, 3])}
_STEP_SIGN = {Variant.E1: -1.0, Variant.E2: 1.0}
_MIRROR_PERM = {Variant.E1: np.array([3, 2, 1, 0]), Variant.E2: np.array([1, 0, 3, 2])}
_BACKWARD_PERM = np.array([0, 1, 3, 2])
BLOCK = {Variant.E1: 8, Variant.E2: 4}
JUNCTIONS = {Variant.E1: (0.0, 1.0, 2.0, 4.0, 8.0), Variant.E2: (0.0, 1.0, 2.0, 4.0)}


@dataclass(frozen=True)
class Periodic:
    period: int

    def __str__(self):
        return f"Periodic({self.period})"


@dataclass(frozen=True)
class QuasiPeriodic:
    def __str__(self):
        return "QuasiPeriodic"


def classify_period(variant, theta: RotationAngle):
    """Periodic(8l) for E1 or Periodic(4l) for E2 when theta = (k/l) pi in lowest terms."""
    variant = Variant.parse(variant)
    if not theta.is_rational:
        return QuasiPeriodic()
    return Periodic(BLOCK[variant] * theta.q)


def _perm_power(perm, m):
    out = np.arange(4)
    for _ in range(m % 4):
        out = out[perm]
    return out


class Extender:
    """Evaluates the extended orbit of a base polyline at arbitrary times."""

    def __init__(self, base: PolylinePath, variant, theta: RotationAngle):
        self.base = base
        self.variant = Variant.parse(variant)
        self.theta = theta
        if not (base.times[0] == 0.0 and base.times[-1] == 1.0):
            raise ValueError("base path must live on [0, 1]")
        self._mirror = B_REFLECT @ rotation(theta.scaled(2))

    def _first_block(self, s):
        """Path on [0, 2]."""
        s = np.asarray(s, dtype=float)
        out = np.empty((s.size, 4, 2))
        lo = s <= 1.0
        if np.any(lo):
            out[lo] = self.base.evaluate(s[lo])
        hi = ~lo
        if np.any(hi):
            q = self.base.evaluate(2.0 - s[hi])[:, _MIRROR_PERM[self.variant]]
            out[hi] = _STEP_SIGN[self.variant] * (q @ self._mirror)
        return out

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        m = np.floor(t / 2.0).astype(int)
        s = t - 2.0 * m
        # keep exact block boundaries on the [0, 1] branch where possible
        q = self._first_block(s)
        out = np.empty_like(q)
        for mm in np.unique(m):
            sel = m == mm
            perm = _perm_power(_STEP_PERM[self.variant], int(mm))
            sign = _STEP_SIGN[self.variant] ** (int(mm) % 2)
            out[sel] = sign * (q[sel][:, perm] @ rotation(self.theta.scaled(2 * int(mm))))
        return out

    def backward(self, t):
        """Reflection of the base path onto [-1, 0]: q(t) = (q1, q2, q4, q3)(-t) B."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any((t < -1.0) | (t > 0.0)):
            raise ValueError("backward reflection is defined on [-1, 0]")
        return self.base.evaluate(-t)[:, _BACKWARD_PERM] @ B_REFLECT


@dataclass(frozen=True)
class ExtendedTrajectory:
    base: PolylinePath
    variant: Variant
    theta: RotationAngle
    times: np.ndarray
    samples: np.ndarray
    junctions: tuple
    period: object
    h: float  # spacing of the base mesh, used for junction stencils

    @property
    def blocklen(self):
        return BLOCK[self.variant]

    def evaluator(self):
        return Extender(self.base, self.variant, self.theta)

    def to_csv(self):
        lines = [f"# variant={self.variant.value}", f"# theta={self.theta}", f"# period={self.period}"]
        lines.append("t,q1x,q1y,q2x,q2y,q3x,q3y,q4x,q4y")
        for t, q in zip(self.times, self.samples):
            lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in q.ravel()]))
        return "\n".join(lines) + "\n"


def extend(base: PolylinePath, variant, theta: RotationAngle, window=None, samples_per_unit=100,
           collision_tol=1e-8) -> ExtendedTrajectory:
    """Sample the extended orbit on ``window`` (default: one period, or one block if quasi-periodic)."""
    variant = Variant.parse(variant)
    for label, q in (("t=0", base.nodes[0]), ("t=1", base.nodes[-1])):
        d, pair = min_pair_distance(q)
        if d < collision_tol:
            raise EndpointCollision(f"bodies {pair} collide at {label} (distance {d:.3g})")
    period = classify_period(variant, theta)
    if window is None:
        window = (0.0, float(period.period if isinstance(period, Periodic) else BLOCK[variant]))
    t0, t1 = (float(w) for w in window)
    if not t1 > t0:
        raise ValueError("window must have positive length")
    n = max(2, int(round((t1 - t0) * samples_per_unit)) + 1)
    times = np.linspace(t0, t1, n)
    ext = Extender(base, variant, theta)
    h = float(np.min(np.diff(base.times)))
    return ExtendedTrajectory(base, variant, theta, times, ext(times), JUNCTIONS[variant], period, h)


def _one_sided(f, tau, h, side):
    q0, q1, q2 = f(np.array([tau, tau + side * h, tau + 2 * side * h]))
    return side * (-3.0 * q0 + 4.0 * q1 - q2) / (2.0 * h)


@dataclass(frozen=True)
class JunctionReport:
    jumps: dict  # junction time -> max velocity jump
    tol: float

    @property
    def max_jump(self):
        return max(self.jumps.values())

    @property
    def passed(self):
        return all(v <= self.tol for v in self.jumps.values())


def c1_junction_check(traj: ExtendedTrajectory, tol=None) -> JunctionReport:
    """Velocity jump at each junction from second-order one-sided stencils on either side."""
    ext = traj.evaluator()
    h = traj.h
    if tol is None:
        tol = 10.0 * h * h
    jumps = {}
    for tau in traj.junctions:
        left = _one_sided(ext, tau, h, -1)
        right = _one_sided(ext, tau, h, +1)
        jumps[tau] = float(np.max(np.abs(left - right)))
    return JunctionReport(jumps, tol)


def accelerations(q):
    """Newtonian accelerations of unit masses (G = 1) for configurations of shape (..., 4, 2)."""
    q = np.asarray(q, dtype=float)
    acc = np.zeros_like(q)
    for i, j in PAIRS:
        d = q[..., j, :] - q[..., i, :]
        r3 = np.hypot(d[..., 0], d[..., 1])[..., None] ** 3
        acc[..., i, :] += d / r3
        acc[..., j, :] -= d / r3
    return acc


@dataclass(frozen=True)
class NewtonResidual:
    max: float
    rms: float
    count: int


def newton_residual_samples(times, samples, sample_count=None) -> NewtonResidual:
    """Compare second differences of uniform samples with Newtonian accelerations."""
    times = np.asarray(times, dtype=float)
    q = np.asarray(samples, dtype=float)
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("samples must be uniform in time")
    h = dt[0]
    if len(q) < 3:
        raise ValueError("need at least three samples")
    qdd = (q[2:] - 2.0 * q[1:-1] + q[:-2]) / (h * h)
    err = np.linalg.norm(qdd - accelerations(q[1:-1]), axis=2).max(axis=1)
    if sample_count is not None:
        err = err[:sample_count]
    return NewtonResidual(float(err.max()), float(np.sqrt(np.mean(err ** 2))), int(err.size))


def newton_residual(traj: ExtendedTrajectory, sample_count=None) -> NewtonResidual:
    return newton_residual_samples(traj.times, traj.samples, sample_count)


def energy_drift(traj: ExtendedTrajectory) -> float:
    """Spread of K - U along the samples (central-difference velocities)."""
    q = traj.samples
    h = traj.times[1] - traj.times[0]
    v = (q[2:] - q[:-2]) / (2.0 * h)
    kin = 0.5 * np.sum(v * v, axis=(1, 2))
    pot = np.zeros(len(v))
    for i, j in PAIRS:
        d = q[1:-1, i] - q[1:-1, j]
        pot += 1.0 / np.hypot(d[:, 0], d[:, 1])
    energy = kin - pot
    return float(energy.max() - energy.min())
