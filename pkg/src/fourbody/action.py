"""Exact action of piecewise-linear four-body paths.

On a segment where every body moves at constant velocity the kinetic part is
elementary, and each pair potential integrates in closed form:
for a separation moving linearly from A to B,

    int_0^1 du / |A + u (B - A)| = (2 / L) atanh(L / S),

with L = |B - A| and S = |A| + |B|. Near a close approach the equivalent form
ln((S + L)^2 / (2E)) / L with E = |A||B| + A.B is used, E being evaluated
without cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Collision, DegenerateSegment, NonConvergence
from .geometry import COM_TOL, PAIRS

_PAIR_I = np.array([i for i, _ in PAIRS])
_PAIR_J = np.array([j for _, j in PAIRS])
DEGENERATE_REL = 1e-13


@dataclass(frozen=True)
class PolylinePath:
    """Nodes visited at ``times`` with constant velocity in between."""

    times: np.ndarray
    nodes: np.ndarray
    com_tol: float = COM_TOL

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        q = np.asarray(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a path needs at least two nodes")
        if q.shape != (t.size, 4, 2):
            raise ValueError(f"nodes must have shape ({t.size}, 4, 2), got {q.shape}")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.max(np.abs(q.sum(axis=1))) > self.com_tol:
            raise ValueError("path nodes leave the centre-of-mass plane")
        t.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "nodes", q)

    @classmethod
    def uniform(cls, nodes, t0=0.0, t1=1.0, **kw):
        nodes = np.asarray(nodes, dtype=float)
        return cls(np.linspace(t0, t1, len(nodes)), nodes, **kw)

    @property
    def segments(self):
        return len(self.times) - 1

    def evaluate(self, t):
        """Linear interpolation of the node positions at time(s) t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.segments - 1)
        t0, t1 = self.times[k], self.times[k + 1]
        w = ((t - t0) / (t1 - t0))[:, None, None]
        return (1 - w) * self.nodes[k] + w * self.nodes[k + 1]

    def reversed(self):
        return PolylinePath(self.times[-1] + self.times[0] - self.times[::-1], self.nodes[::-1],
                            com_tol=self.com_tol)

    def transformed(self, matrix=None, scale=1.0, time_scale=1.0):
        q = self.nodes * scale
        if matrix is not None:
            q = q @ matrix
        return PolylinePath(self.times * time_scale, q, com_tol=self.com_tol * max(1.0, abs(scale)))


@dataclass(frozen=True)
class ActionBreakdown:
    total: float
    kinetic: float
    potential: float
    pairwise: dict = field(default_factory=dict)

    @property
    def pairwise_total(self):
        return 0.25 * sum(self.pairwise.values())


def segment_kinetic(start, end, dt) -> float:
    if not dt > 0:
        raise ValueError("dt must be positive")
    d = np.asarray(end, dtype=float) - np.asarray(start, dtype=float)
    return float(np.sum(d * d)) / (2.0 * dt)


def _classify(A, B):
    """Shared geometry of separations moving linearly from A to B (arrays of shape (..., 2))."""
    r0 = np.hypot(A[..., 0], A[..., 1])
    r1 = np.hypot(B[..., 0], B[..., 1])
    D = B - A
    L = np.hypot(D[..., 0], D[..., 1])
    dot = np.sum(A * B, axis=-1)
    cross = A[..., 0] * B[..., 1] - A[..., 1] * B[..., 0]
    return r0, r1, L, dot, cross


def _energy_term(r0, r1, dot, cross):
    """E = r0 r1 + A.B, computed without cancellation when A.B < 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        alt = cross * cross / (r0 * r1 - dot)
    return np.where(dot >= 0, r0 * r1 + dot, alt)


def _bad_segments(r0, r1, L, dot, cross):
    """Boolean masks (collision, degenerate) for each segment."""
    collide = (r0 == 0) | (r1 == 0) | ((cross == 0) & (dot <= 0))
    scale = np.maximum(r0, r1)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.abs(cross) / L
    degenerate = ~collide & (L > 0) & (dot < 0) & (h < DEGENERATE_REL * scale)
    return collide, degenerate


def _inv_dist_core(r0, r1, L, dot, cross):
    """Closed-form integral for well-posed segments (no checks)."""
    S = r0 + r1
    x = L / S
    E = _energy_term(r0, r1, dot, cross)
    with np.errstate(divide="ignore", invalid="ignore"):
        near = np.log((S + L) ** 2 / (2.0 * E)) / L
        far = 2.0 * np.arctanh(x) / L
    out = np.where(x < 0.5, far, near)
    return np.where(L == 0, 1.0 / r0, out)


def inverse_distance_integral(A, B) -> np.ndarray:
    """int_0^1 du / |A + u (B - A)| for arrays of 2-vectors A, B."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    geo = _classify(A, B)
    collide, degenerate = _bad_segments(*geo)
    if np.any(collide):
        raise Collision("separation vanishes on the segment")
    if np.any(degenerate):
        raise DegenerateSegment("antiparallel approach with vanishing impact parameter")
    return _inv_dist_core(*geo)


def line_inverse_distance_integral(a, b, c, d) -> float:
    """int_0^1 du / sqrt((a + b u)^2 + (c + d u)^2)."""
    A = np.array([a, c], dtype=float)
    B = np.array([a + b, c + d], dtype=float)
    return float(inverse_distance_integral(A, B))


_K_SERIES = np.array([2 * n / (2 * n + 1) for n in range(1, 22)])


def _k_of_x(x, S, E, f):
    """k(x) = (1/(1-x^2) - atanh(x)/x) / x^2, with a series near x = 0."""
    x2 = x * x
    series = np.polynomial.polynomial.polyval(x2, _K_SERIES)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (S * S / (2.0 * E) - 0.5 * f * S) / x2
    return np.where(x < 0.3, series, direct)


def inverse_distance_integral_grad(A, B):
    """Value and gradients (dA, dB) of the closed-form integral; inputs assumed collision-free."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    r0, r1, L, dot, cross = _classify(A, B)
    f = _inv_dist_core(r0, r1, L, dot, cross)
    S = r0 + r1
    E = _energy_term(r0, r1, dot, cross)
    k = _k_of_x(L / S, S, E, f)
    coef = (2.0 / S ** 3 * k)[..., None]
    dA = -(A / (E * r0)[..., None]) + coef * (A - B)
    dB = -(B / (E * r1)[..., None]) + coef * (B - A)
    return f, dA, dB


def _separations(nodes):
    return nodes[:, _PAIR_I, :] - nodes[:, _PAIR_J, :]


def _pair_integrals(nodes, dts):
    """Per-segment, per-pair closed-form integrals (shape (segments, 6)); raises on collision."""
    rel = _separations(nodes)
    A, B = rel[:-1], rel[1:]
    geo = _classify(A, B)
    collide, degenerate = _bad_segments(*geo)
    for mask, exc in ((collide, Collision), (degenerate, DegenerateSegment)):
        if np.any(mask):
            s, p = (int(v) for v in np.argwhere(mask)[0])
            pair = (PAIRS[p][0] + 1, PAIRS[p][1] + 1)
            msg = f"segment {s}, bodies {pair}: " + (
                "separation vanishes" if exc is Collision else "ill-conditioned antiparallel approach")
            if exc is Collision:
                raise Collision(msg, segment=s, pair=pair)
            raise DegenerateSegment(msg)
    return dts[:, None] * _inv_dist_core(*geo), rel


def polyline_action(path: PolylinePath) -> ActionBreakdown:
    q = path.nodes
    dts = np.diff(path.times)
    dq = np.diff(q, axis=0)
    kin_seg = np.sum(dq * dq, axis=(1, 2)) / (2.0 * dts)
    pot, rel = _pair_integrals(q, dts)
    kinetic = float(np.sum(kin_seg))
    potential = float(np.sum(pot))
    drel = np.diff(rel, axis=0)
    rel_kin = np.sum(drel * drel, axis=2) / (2.0 * dts[:, None])
    pairwise_vals = np.sum(rel_kin + 4.0 * pot, axis=0)
    pairwise = {(i + 1, j + 1): float(v) for (i, j), v in zip(PAIRS, pairwise_vals)}
    return ActionBreakdown(kinetic + potential, kinetic, potential, pairwise)


def action_value(nodes, dt) -> float:
    """Total action of uniformly spaced nodes (shape (n+1, 4, 2)), no validation."""
    dq = np.diff(nodes, axis=0)
    pot, _ = _pair_integrals(nodes, np.full(len(nodes) - 1, dt))
    return float(np.sum(dq * dq) / (2.0 * dt) + np.sum(pot))


def action_and_node_gradient(nodes, dt):
    """Total action and its gradient with respect to every node coordinate.

    ``nodes`` has shape (n+1, 4, 2) on a uniform mesh of spacing ``dt``.
    """
    dq = np.diff(nodes, axis=0)
    rel = _separations(nodes)
    collide, degenerate = _bad_segments(*_classify(rel[:-1], rel[1:]))
    if np.any(collide | degenerate):
        s, p = (int(v) for v in np.argwhere(collide | degenerate)[0])
        pair = (PAIRS[p][0] + 1, PAIRS[p][1] + 1)
        if collide[s, p]:
            raise Collision(f"segment {s}, bodies {pair}: separation vanishes", segment=s, pair=pair)
        raise DegenerateSegment(f"segment {s}, bodies {pair}: ill-conditioned antiparallel approach")
    f, gA, gB = inverse_distance_integral_grad(rel[:-1], rel[1:])
    value = float(np.sum(dq * dq) / (2.0 * dt) + dt * np.sum(f))
    grad = np.zeros_like(nodes)
    grad[:-1] -= dq / dt
    grad[1:] += dq / dt
    g_rel = np.zeros_like(rel)
    g_rel[:-1] += dt * gA
    g_rel[1:] += dt * gB
    np.add.at(grad, (slice(None), _PAIR_I), g_rel)
    np.add.at(grad, (slice(None), _PAIR_J), -g_rel)
    return value, grad


def segment_min_separation(nodes) -> float:
    """Smallest pair distance reached anywhere along a node sequence."""
    rel = _separations(np.asarray(nodes, dtype=float))
    A, B = rel[:-1], rel[1:]
    D = B - A
    L2 = np.sum(D * D, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.clip(np.where(L2 > 0, -np.sum(A * D, axis=-1) / L2, 0.0), 0.0, 1.0)
    closest = A + u[..., None] * D
    return float(np.min(np.hypot(closest[..., 0], closest[..., 1])))


# Gauss-Kronrod 7/15 on [-1, 1]
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_G_IDX = np.array([1, 3, 5, 7, 9, 11, 13])
G_WEIGHTS = np.concatenate([_WG[:-1], _WG[::-1]])


def gauss_kronrod(f, a, b):
    """One G7/K15 panel: (kronrod estimate, |kronrod - gauss|)."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    y = f(mid + half * GK_NODES)
    k = half * float(np.dot(GK_WEIGHTS, y))
    g = half * float(np.dot(G_WEIGHTS, y[_G_IDX]))
    return k, abs(k - g)


def adaptive_integrate(f, a, b, tol, max_depth=40):
    """Recursive bisection until each panel's embedded error estimate meets its share of tol."""
    total = 0.0
    stack = [(a, b, tol, 0)]
    while stack:
        lo, hi, eps, depth = stack.pop()
        val, err = gauss_kronrod(f, lo, hi)
        if err <= eps:
            total += val
            continue
        if depth >= max_depth:
            raise NonConvergence(f"quadrature did not converge on [{lo!r}, {hi!r}] after {depth} bisections")
        mid = 0.5 * (lo + hi)
        stack.append((mid, hi, 0.5 * eps, depth + 1))
        stack.append((lo, mid, 0.5 * eps, depth + 1))
    return total


def _lagrangian_on_segment(q0, q1, dt):
    vel = (q1 - q0) / dt
    kin = 0.5 * float(np.sum(vel * vel))

    def f(s):
        s = np.asarray(s)[:, None, None]
        q = q0 + s * vel
        rel = q[:, _PAIR_I, :] - q[:, _PAIR_J, :]
        return kin + np.sum(1.0 / np.hypot(rel[..., 0], rel[..., 1]), axis=1)

    return f


def action_quadrature_oracle(path: PolylinePath, tol=1e-9, max_depth=40) -> float:
    """Action by adaptive quadrature of K + U, independent of the closed form."""
    n = path.segments
    total = 0.0
    for s in range(n):
        q0, q1 = path.nodes[s], path.nodes[s + 1]
        dt = path.times[s + 1] - path.times[s]
        f = _lagrangian_on_segment(q0, q1, dt)
        total += adaptive_integrate(f, 0.0, dt, tol / n, max_depth)
    return total
