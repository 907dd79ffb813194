"""Discrete action minimization with free structured boundaries.

The unknowns are the interior nodes of a uniform polyline on [0, 1] (bodies
1-3; body 4 keeps the centre of mass at the origin) together with the three
start scalars (a1, b1, c1) and the three end scalars (a2, b2, c2). Both
endpoint configurations are always rebuilt from those scalars, and b, c are
kept non-negative by the bound constraints of L-BFGS-B.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import sparse
from scipy.optimize import minimize as scipy_minimize
from scipy.sparse.linalg import spsolve

from .action import (PolylinePath, action_and_node_gradient, polyline_action,
                     segment_min_separation)
from .errors import AllRestartsCollapsed, Collision, DegenerateSegment, OutOfRange
from .geometry import (B_REFLECT, BoundaryParams, RotationAngle, Side, Variant, boundary_map,
                       build_boundary, complete_configuration, fit_boundary, rotation)
from .testpaths import all_tables, build_test_path, certified_range, load_table

GUARD_PENALTY = 1e12


@dataclass(frozen=True)
class DiscretePath:
    variant: Variant
    theta: RotationAngle
    N: int
    start_params: BoundaryParams
    end_params: BoundaryParams
    interior: np.ndarray  # (N-1, 4, 2)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.N < 2:
            raise ValueError("need at least two segments")
        q = np.asarray(self.interior, dtype=float)
        if q.shape != (self.N - 1, 4, 2):
            raise ValueError(f"interior nodes must have shape ({self.N - 1}, 4, 2)")
        q.setflags(write=False)
        object.__setattr__(self, "interior", q)

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def nodes(self):
        return np.concatenate([build_boundary(self.start_params)[None], self.interior,
                               build_boundary(self.end_params)[None]])

    def polyline(self) -> PolylinePath:
        return PolylinePath(np.linspace(0.0, 1.0, self.N + 1), self.nodes)

    def to_json(self):
        return {
            "variant": self.variant.value,
            "theta": _angle_json(self.theta),
            "N": self.N,
            "start_params": _params_json(self.start_params),
            "end_params": _params_json(self.end_params),
            "nodes": self.nodes.tolist(),
        }

    @classmethod
    def from_json(cls, data):
        theta = _angle_from_json(data["theta"])
        variant = Variant.parse(data["variant"])
        sp, ep = data["start_params"], data["end_params"]
        nodes = np.asarray(data["nodes"], dtype=float)
        return cls(variant, theta, int(data["N"]),
                   BoundaryParams(Side.START, sp["a"], sp["b"], sp["c"]),
                   BoundaryParams(Side.end_for(variant), ep["a"], ep["b"], ep["c"], theta),
                   complete_configuration(nodes[1:-1, :3]))


def _angle_json(theta):
    if theta.is_rational:
        return {"p": theta.p, "q": theta.q}
    return {"real": theta.real}


def _angle_from_json(d):
    if "real" in d:
        return RotationAngle.irrational(d["real"])
    return RotationAngle.pi_fraction(d["p"], d["q"])


def _params_json(p):
    return {"a": p.a, "b": p.b, "c": p.c}


@dataclass(frozen=True)
class MinimizeOptions:
    restarts: int = 4
    seed: int = 0
    max_iterations: int = 50000
    gradient_tolerance: float = 1e-10
    ftol: float = 1e-15
    noise_sigma: float = 0.05  # relative to the configuration scale
    collision_guard: float = 1e-6
    collision_tolerance: float = 1e-3
    ladder: tuple = ()  # coarser segment counts solved first, then prolonged
    workers: int = 1
    memory: int = 30
    polish: bool = True

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not (self.gradient_tolerance > 0 and self.ftol > 0 and self.max_iterations > 0):
            raise ValueError("tolerances and iteration limits must be positive")


@dataclass
class RestartTrace:
    index: int
    kind: str
    initial_action: float
    final_action: float
    iterations: int
    min_pair_distance: float
    collapsed: bool
    message: str
    history: list = field(default_factory=list, repr=False)


@dataclass
class FirstVariationResidual:
    start: float
    end: float
    components: dict

    @property
    def max(self):
        return max(self.start, self.end)


@dataclass
class MinimizeResult:
    path: DiscretePath
    action: float
    collision_free: bool
    min_pair_distance: float
    residuals: FirstVariationResidual
    trace: list
    best_restart: int

    @property
    def history(self):
        return self.trace[self.best_restart].history

    def to_json(self):
        data = self.path.to_json()
        data.update({
            "action": self.action,
            "residuals": {"start": self.residuals.start, "end": self.residuals.end},
            "min_pair_distance": self.min_pair_distance,
            "collision_free": self.collision_free,
            "restarts": [
                {k: v for k, v in asdict(t).items() if k != "history"} for t in self.trace
            ],
        })
        return data


class _Layout:
    """Flat-vector layout: interior q1..q3 coordinates, start (a, b, c), end (a, b, c)."""

    def __init__(self, variant, theta, N, mirror=False):
        self.variant = Variant.parse(variant)
        self.theta = theta
        self.N = N
        self.mirror = mirror
        self.n_int = (N - 1) * 6
        self.Ms = boundary_map(Side.START)
        self.end_side = Side.end_for(self.variant)
        self.Me = boundary_map(self.end_side, theta)
        if mirror:
            flip = np.tile([1.0, -1.0], 4)[:, None]
            self.Ms, self.Me = flip * self.Ms, flip * self.Me

    @property
    def size(self):
        return self.n_int + 6

    def bounds(self):
        free = [(None, None)] * self.n_int
        abc = [(None, None), (0.0, None), (0.0, None)]
        return free + abc + abc

    def nodes(self, x):
        q = np.empty((self.N + 1, 4, 2))
        q[0] = (self.Ms @ x[self.n_int:self.n_int + 3]).reshape(4, 2)
        q[-1] = (self.Me @ x[self.n_int + 3:]).reshape(4, 2)
        q[1:-1] = complete_configuration(x[:self.n_int].reshape(self.N - 1, 3, 2))
        return q

    def pull_back(self, g):
        """Node gradient (N+1, 4, 2) to a flat gradient in the free variables."""
        gi = g[1:-1, :3] - g[1:-1, 3:4]
        return np.concatenate([gi.ravel(), self.Ms.T @ g[0].ravel(), self.Me.T @ g[-1].ravel()])

    def pack(self, path: DiscretePath):
        interior = path.interior @ B_REFLECT if self.mirror else path.interior
        return np.concatenate([interior[:, :3].ravel(), path.start_params.abc, path.end_params.abc])

    def unpack(self, x) -> DiscretePath:
        a1, b1, c1 = x[self.n_int:self.n_int + 3]
        a2, b2, c2 = x[self.n_int + 3:]
        return DiscretePath(
            self.variant, self.theta, self.N,
            BoundaryParams(Side.START, float(a1), max(float(b1), 0.0), max(float(c1), 0.0)),
            BoundaryParams(self.end_side, float(a2), max(float(b2), 0.0), max(float(c2), 0.0), self.theta),
            complete_configuration(x[:self.n_int].reshape(self.N - 1, 3, 2)),
        )


def discrete_action_gradient(path: DiscretePath):
    """Action and its gradient over (interior q1..q3, start abc, end abc)."""
    lay = _Layout(path.variant, path.theta, path.N)
    value, g = action_and_node_gradient(path.nodes, path.h)
    return value, lay.pull_back(g)


def projected_gradient(path: DiscretePath, grad=None):
    """Gradient with components that point out of b, c >= 0 zeroed at the bound."""
    lay = _Layout(path.variant, path.theta, path.N)
    if grad is None:
        grad = discrete_action_gradient(path)[1]
    x = lay.pack(path)
    pg = grad.copy()
    for k, (lo, _) in enumerate(lay.bounds()):
        if lo is not None and x[k] <= lo and pg[k] > 0:
            pg[k] = 0.0
    return pg


def _objective(lay, guard):
    def fun(x):
        q = lay.nodes(x)
        if segment_min_separation(q) < guard:
            return GUARD_PENALTY, np.zeros_like(x)
        try:
            value, g = action_and_node_gradient(q, 1.0 / lay.N)
        except (Collision, DegenerateSegment):
            return GUARD_PENALTY, np.zeros_like(x)
        if not np.isfinite(value):
            return GUARD_PENALTY, np.zeros_like(x)
        return value, lay.pull_back(g)
    return fun


def _stencil_velocity(q0, q1, q2, h):
    """Second-order one-sided velocity at q0 looking towards q1, q2 (sign for forward direction)."""
    return (-3.0 * q0 + 4.0 * q1 - q2) / (2.0 * h)


def boundary_velocities(nodes, h):
    v0 = _stencil_velocity(nodes[0], nodes[1], nodes[2], h)
    v1 = -_stencil_velocity(nodes[-1], nodes[-2], nodes[-3], h)
    return v0, v1


def first_variation_residual(path) -> FirstVariationResidual:
    """Residuals of the transversality conditions forced by the free boundary scalars."""
    if path.N < 4:
        raise ValueError("first-variation residuals need N >= 4")
    v0, v1 = boundary_velocities(path.nodes, path.h)
    start = {
        "v1x": abs(v0[0, 0]),
        "v2x": abs(v0[1, 0]),
        "v3x+v4x": abs(v0[2, 0] + v0[3, 0]),
        "v3y-v4y": abs(v0[2, 1] - v0[3, 1]),
    }
    BR = B_REFLECT @ rotation(path.theta.scaled(2))
    if path.variant is Variant.E1:
        end = {
            "v1-v4BR": float(np.max(np.abs(v1[0] - v1[3] @ BR))),
            "v2-v3BR": float(np.max(np.abs(v1[1] - v1[2] @ BR))),
        }
    else:
        end = {
            "v1+v2BR": float(np.max(np.abs(v1[0] + v1[1] @ BR))),
            "v3+v4BR": float(np.max(np.abs(v1[2] + v1[3] @ BR))),
        }
    comps = {k: float(v) for k, v in {**start, **end}.items()}
    return FirstVariationResidual(max(float(v) for v in start.values()), max(end.values()), comps)


def _resample(nodes, times, N):
    grid = np.linspace(0.0, 1.0, N + 1)
    flat = np.asarray(nodes).reshape(len(nodes), 8)
    return np.stack([np.interp(grid, times, flat[:, k]) for k in range(8)], axis=1).reshape(N + 1, 4, 2)


def seed_from_polyline(variant, theta, polyline: PolylinePath, N) -> DiscretePath:
    variant = Variant.parse(variant)
    start = fit_boundary(polyline.nodes[0], Side.START)
    end = fit_boundary(polyline.nodes[-1], Side.end_for(variant), theta)
    fine = _resample(polyline.nodes, polyline.times, N)
    return DiscretePath(variant, theta, N, start, end, complete_configuration(fine[1:-1, :3]))


def prolong(path: DiscretePath, N) -> DiscretePath:
    """Linear interpolation of a coarse path onto a finer uniform mesh."""
    return seed_from_polyline(path.variant, path.theta, path.polyline(), N)


def _in_certified_range(variant, theta):
    if not theta.is_rational:
        return False
    lo, hi = certified_range(variant)
    return lo < theta.frac <= hi


def _shape_table(variant, theta):
    """Table used for seeding: the covering one, else the closest edge of the coverage."""
    if _in_certified_range(variant, theta):
        return load_table(variant, theta)
    tables = all_tables(variant)
    return max(tables, key=lambda t: t.interval[1])


def seeds(variant, theta, N, opts: MinimizeOptions):
    """Initial paths for each restart: (kind, DiscretePath)."""
    variant = Variant.parse(variant)
    table = _shape_table(variant, theta)
    base = seed_from_polyline(variant, theta, build_test_path(variant, theta, table), N)
    kind0 = "test-path" if _in_certified_range(variant, theta) else "table-shape"
    out = [(kind0, base)]
    if opts.restarts >= 2:
        a, b = build_boundary(base.start_params), build_boundary(base.end_params)
        w = np.linspace(0.0, 1.0, N + 1)[1:-1, None, None]
        line = (1 - w) * a + w * b
        out.append(("homotopy", DiscretePath(variant, theta, N, base.start_params, base.end_params, line)))
    scale = float(np.sqrt(np.mean(np.sum(base.nodes ** 2, axis=2))))
    for r in range(len(out), opts.restarts):
        rng = np.random.Generator(np.random.Philox(key=np.array([opts.seed, r], dtype=np.uint64)))
        sigma = opts.noise_sigma * scale
        noise = rng.normal(0.0, sigma, size=(N - 1, 3, 2))
        sp, ep = base.start_params, base.end_params
        ds, de = rng.normal(0.0, sigma, size=3), rng.normal(0.0, sigma, size=3)
        out.append(("perturbed", DiscretePath(
            variant, theta, N,
            BoundaryParams(Side.START, sp.a + ds[0], max(sp.b + ds[1], 0.0), max(sp.c + ds[2], 0.0)),
            BoundaryParams(ep.side, ep.a + de[0], max(ep.b + de[1], 0.0), max(ep.c + de[2], 0.0), theta),
            complete_configuration(base.interior[:, :3] + noise),
        )))
    return out[:opts.restarts]


def descend(path: DiscretePath, opts: MinimizeOptions):
    """Run L-BFGS-B from one initial path. Returns (DiscretePath, iterations, message, history)."""
    lay = _Layout(path.variant, path.theta, path.N)
    fun = _objective(lay, opts.collision_guard)
    x0 = lay.pack(path)
    cache = {}

    def wrapped(x):
        out = fun(x)
        cache["last"] = (x.copy(), out[0])
        return out

    history = [wrapped(x0)[0]]

    def callback(xk):
        x, f = cache["last"]
        history.append(f if np.array_equal(x, xk) else fun(xk)[0])

    res = scipy_minimize(
        wrapped, x0, jac=True, method="L-BFGS-B", bounds=lay.bounds(), callback=callback,
        options={"maxiter": opts.max_iterations, "maxfun": 4 * opts.max_iterations,
                 "ftol": opts.ftol, "gtol": opts.gradient_tolerance, "maxcor": opts.memory,
                 "maxls": 60},
    )
    return lay.unpack(res.x), int(res.nit), str(res.message), history


def _hessian_columns(lay):
    """Colour groups of variables whose gradient footprints do not overlap, with each column's footprint."""
    N, n_int = lay.N, lay.n_int
    node_rows = {j: np.arange((j - 1) * 6, j * 6) for j in range(1, N)}
    start_rows = np.arange(n_int, n_int + 3)
    end_rows = np.arange(n_int + 3, n_int + 6)
    groups = {}
    footprint = {}
    for j in range(1, N):
        rows = [node_rows[m] for m in (j - 1, j, j + 1) if m in node_rows]
        if j == 1:
            rows.append(start_rows)
        if j == N - 1:
            rows.append(end_rows)
        rows = np.concatenate(rows)
        for k in range(6):
            col = (j - 1) * 6 + k
            groups.setdefault((j % 3, k), []).append(col)
            footprint[col] = rows
    for base, node in ((n_int, 1), (n_int + 3, N - 1)):
        rows = np.concatenate([node_rows[node], np.arange(base, base + 3)])
        for k in range(3):
            groups[("p", base + k)] = [base + k]
            footprint[base + k] = rows
    return list(groups.values()), footprint


def _sparse_hessian(fun, x, lay, eps):
    groups, footprint = _hessian_columns(lay)
    rows, cols, vals = [], [], []
    for group in groups:
        e = np.zeros_like(x)
        e[group] = eps
        dg = (fun(x + e)[1] - fun(x - e)[1]) / (2 * eps)
        for col in group:
            r = footprint[col]
            rows.append(r)
            cols.append(np.full(r.size, col))
            vals.append(dg[r])
    H = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(x.size, x.size))
    return 0.5 * (H + H.T)


def newton_polish(path: DiscretePath, opts: MinimizeOptions | None = None, steps=8, tol=1e-13):
    """Newton iterations on the stationarity equations, with a finite-difference sparse Hessian.

    Quasi-Newton descent stalls once action changes drop below rounding; the
    gradient itself is still accurate, so a few Newton steps drive it to the
    rounding floor. Variables sitting on b, c = 0 with outward gradient stay fixed.
    """
    opts = opts or MinimizeOptions()
    lay = _Layout(path.variant, path.theta, path.N)
    fun = _objective(lay, opts.collision_guard)
    x = lay.pack(path)
    f, g = fun(x)
    if f >= GUARD_PENALTY:
        return path
    lower = np.array([lo if lo is not None else -np.inf for lo, _ in lay.bounds()])
    scale = max(1.0, float(np.max(np.abs(x))))
    for _ in range(steps):
        free = ~((x <= lower) & (g > 0))
        gnorm = float(np.max(np.abs(g[free])))
        if gnorm < tol:
            break
        H = _sparse_hessian(fun, x, lay, 1e-5 * scale)
        idx = np.flatnonzero(free)
        step = np.zeros_like(x)
        step[idx] = spsolve(H[idx][:, idx].tocsc(), g[idx])
        trial = np.maximum(x - step, lower)
        f_new, g_new = fun(trial)
        free_new = ~((trial <= lower) & (g_new > 0))
        if f_new >= GUARD_PENALTY or float(np.max(np.abs(g_new[free_new]))) >= gnorm:
            break
        x, f, g = trial, f_new, g_new
    return lay.unpack(x)


def _run_restart(args):
    index, kind, path, opts = args
    q0 = path.nodes
    sep0 = segment_min_separation(q0)
    if sep0 < opts.collision_guard:
        return RestartTrace(index, kind, math.inf, math.inf, 0, sep0, True, "seed collides"), path
    initial = polyline_action(path.polyline()).total
    best, nit, msg, history = descend(path, opts)
    if opts.polish:
        best = newton_polish(best, opts)
    sep = segment_min_separation(best.nodes)
    try:
        final = polyline_action(best.polyline()).total
    except (Collision, DegenerateSegment):
        final = math.inf
    collapsed = sep < opts.collision_tolerance or not math.isfinite(final)
    return RestartTrace(index, kind, initial, final, nit, sep, collapsed, msg, history), best


def _solve_level(variant, theta, N, opts, initial=None):
    if initial is None:
        jobs = [(k, kind, p, opts) for k, (kind, p) in enumerate(seeds(variant, theta, N, opts))]
    else:
        jobs = [(0, "prolonged", initial, opts)]
    if opts.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=opts.workers) as ex:
            outcomes = list(ex.map(_run_restart, jobs))
    else:
        outcomes = [_run_restart(j) for j in jobs]
    return outcomes


def _pick(outcomes):
    """Lowest action among non-collapsed restarts, ties to the lowest index; else lowest overall."""
    ok = [k for k, (t, _) in enumerate(outcomes) if not t.collapsed]
    pool = ok if ok else list(range(len(outcomes)))
    return min(pool, key=lambda k: (outcomes[k][0].final_action, k)), bool(ok)


def minimize(variant, theta, N=40, opts: MinimizeOptions | None = None) -> MinimizeResult:
    """Minimize the discrete action over interior nodes and all six boundary scalars."""
    opts = opts or MinimizeOptions()
    variant = Variant.parse(variant)
    if not isinstance(theta, RotationAngle):
        theta = RotationAngle(Fraction(theta))
    if not (0 < theta.radians < math.pi / 4):
        raise OutOfRange("theta must lie in (0, pi/4)")
    rungs = [n for n in opts.ladder if n < N] + [N]
    outcomes = _solve_level(variant, theta, rungs[0], opts)
    k, ok = _pick(outcomes)
    trace = [t for t, _ in outcomes]
    best = outcomes[k][1]
    for n in rungs[1:]:
        t, best = _solve_level(variant, theta, n, opts, prolong(best, n))[0]
        t.index = len(trace)
        trace.append(t)
        k = t.index
        ok = not t.collapsed
    breakdown = polyline_action(best.polyline()) if trace[k].final_action < math.inf else None
    result = MinimizeResult(
        path=best,
        action=breakdown.total if breakdown else math.inf,
        collision_free=ok,
        min_pair_distance=trace[k].min_pair_distance,
        residuals=first_variation_residual(best) if best.N >= 4 else None,
        trace=trace,
        best_restart=k,
    )
    if not ok:
        raise AllRestartsCollapsed("every restart ended within the collision tolerance", result)
    return result


def mirror_nodes(nodes):
    """Reflect every node across the x-axis (no relabelling)."""
    return np.asarray(nodes) @ B_REFLECT


def mirrored_descent(path: DiscretePath, opts: MinimizeOptions | None = None):
    """Descend on the x-axis mirror image of the problem, starting from the mirror of ``path``.

    The mirrored problem has boundary families reflected by B, so its start
    family puts body 3 below the axis and its end family turns by -theta.
    Returns the final action, which should match the unmirrored descent.
    """
    opts = opts or MinimizeOptions()
    lay = _Layout(path.variant, path.theta, path.N, mirror=True)
    x0 = lay.pack(path)  # boundary scalars are unchanged by the reflection
    fun = _objective(lay, opts.collision_guard)
    res = scipy_minimize(
        fun, x0, jac=True, method="L-BFGS-B", bounds=lay.bounds(),
        options={"maxiter": opts.max_iterations, "maxfun": 4 * opts.max_iterations,
                 "ftol": opts.ftol, "gtol": opts.gradient_tolerance, "maxcor": opts.memory,
                 "maxls": 60},
    )
    return float(res.fun), mirror_nodes(lay.nodes(res.x))
