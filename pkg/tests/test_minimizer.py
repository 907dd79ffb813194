import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fourbody.action import PolylinePath, polyline_action
from fourbody.bounds import g1, g2
from fourbody.errors import AllRestartsCollapsed, OutOfRange
from fourbody.extension import accelerations
from fourbody.geometry import (BoundaryParams, RotationAngle, Side, build_boundary, complete_configuration,
                               family_residual)
from fourbody.minimizer import (DiscretePath, MinimizeOptions, _Layout, descend, discrete_action_gradient,
                                first_variation_residual, minimize, mirrored_descent, projected_gradient,
                                prolong, seed_from_polyline, seeds)
from fourbody.testpaths import build_test_path, evaluate_test_path

from conftest import PI_20

FAST = MinimizeOptions(restarts=1)


def feasible_point(variant, rng, N=20, sigma=0.05):
    """Test-path seed with node and parameter noise, kept inside b, c >= 0."""
    base = seeds(variant, PI_20, N, FAST)[0][1]
    lay = _Layout(variant, PI_20, N)
    x = lay.pack(base) + rng.normal(0.0, sigma, lay.size)
    for k in (1, 2, 4, 5):
        x[lay.n_int + k] = abs(x[lay.n_int + k])
    return lay, x


def fd_gradient(lay, x, h):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (discrete_action_gradient(lay.unpack(x + e))[0]
                - discrete_action_gradient(lay.unpack(x - e))[0]) / (2 * h)
    return g


@settings(max_examples=8)
@given(st.sampled_from(["E1", "E2"]), st.integers(0, 2 ** 32 - 1))
def test_gradient_matches_finite_differences(variant, seed):
    lay, x = feasible_point(variant, np.random.default_rng(seed), N=8)
    _, g = discrete_action_gradient(lay.unpack(x))
    fd = fd_gradient(lay, x, 1e-6 * max(1.0, np.max(np.abs(x))))
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=0)


def test_static_path_has_no_kinetic_gradient():
    q = complete_configuration(np.array([[-2.0, 0.0], [-0.5, 0.0], [1.25, 1.5]]))
    path = PolylinePath.uniform([q] * 5)
    from fourbody.action import action_and_node_gradient
    _, g = action_and_node_gradient(path.nodes, 0.25)
    # only the potential acts: with U = sum 1/r, grad U = a(q), so each interior node carries h * a(q)
    np.testing.assert_allclose(g[1:-1], 0.25 * accelerations(q)[None].repeat(3, axis=0), rtol=1e-12)


def test_b_or_c_at_zero_is_a_collision():
    # every b = 0 or c = 0 face of the boundary families puts two bodies on top of each other,
    # so the action is infinite there and no one-sided derivative exists
    from fourbody.errors import Collision
    base = seeds("E1", PI_20, 10, FAST)[0][1]
    sp = base.start_params
    path = DiscretePath("E1", PI_20, 10, BoundaryParams(Side.START, sp.a, 0.0, sp.c), base.end_params,
                        base.interior)
    with pytest.raises(Collision):
        discrete_action_gradient(path)


def test_projected_gradient_at_bound():
    base = seeds("E1", PI_20, 10, FAST)[0][1]
    sp = base.start_params
    path = DiscretePath("E1", PI_20, 10, BoundaryParams(Side.START, sp.a, 0.0, sp.c), base.end_params,
                        base.interior)
    lay = _Layout("E1", PI_20, 10)
    k = lay.n_int + 1
    g = np.ones(lay.size)
    assert projected_gradient(path, g)[k] == 0.0  # descent would push b1 below zero
    g[k] = -1.0
    assert projected_gradient(path, g)[k] == -1.0  # moving into the feasible set is allowed
    assert np.all(projected_gradient(path, g)[:k] == 1.0)


def test_seed_reproduces_test_path_action():
    for variant in ("E1", "E2"):
        seed = seeds(variant, PI_20, 40, FAST)[0][1]
        assert polyline_action(seed.polyline()).total == pytest.approx(evaluate_test_path(variant, PI_20), abs=1e-6)


def test_seeds_deterministic_and_distinct():
    opts = MinimizeOptions(restarts=4, seed=11)
    a = seeds("E1", PI_20, 20, opts)
    b = seeds("E1", PI_20, 20, opts)
    assert [k for k, _ in a] == ["test-path", "homotopy", "perturbed", "perturbed"]
    for (_, p), (_, q) in zip(a, b):
        assert np.array_equal(p.nodes, q.nodes)
    assert not np.array_equal(a[2][1].nodes, a[3][1].nodes)
    c = seeds("E1", PI_20, 20, MinimizeOptions(restarts=4, seed=12))
    assert not np.array_equal(a[2][1].nodes, c[2][1].nodes)


@pytest.mark.parametrize("variant,g", [("E1", g1), ("E2", g2)])
def test_minimize_at_pi_over_20(variant, g):
    res = minimize(variant, PI_20, 40, MinimizeOptions(restarts=2))
    assert res.collision_free
    assert res.action < g(PI_20.radians)
    assert res.action <= evaluate_test_path(variant, PI_20) + 1e-6
    assert res.action == pytest.approx(polyline_action(res.path.polyline()).total, abs=1e-12)
    q = res.path.nodes
    assert family_residual(q[0], Side.START) < 1e-12
    end = Side.END_E1 if variant == "E1" else Side.END_E2
    assert family_residual(q[-1], end, PI_20) < 1e-12
    hist = res.history
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_descent_from_feasible_seed_at_top_of_range():
    th = RotationAngle.parse("539/10000pi")
    res = minimize("E1", th, 20, FAST)
    assert res.action <= evaluate_test_path("E1", th)


def test_theta_domain():
    with pytest.raises(OutOfRange):
        minimize("E1", RotationAngle.pi_fraction(1, 4), 10, FAST)
    with pytest.raises(OutOfRange):
        minimize("E1", RotationAngle.pi_fraction(0), 10, FAST)


def test_outside_table_range_uses_table_shape():
    th = RotationAngle.pi_fraction(1, 10)
    kinds = [k for k, _ in seeds("E2", th, 10, MinimizeOptions(restarts=2))]
    assert kinds == ["table-shape", "homotopy"]


def test_all_restarts_collapsed_is_reported():
    opts = MinimizeOptions(restarts=1, collision_tolerance=100.0, max_iterations=5, polish=False)
    with pytest.raises(AllRestartsCollapsed) as info:
        minimize("E1", PI_20, 10, opts)
    assert info.value.result is not None and not info.value.result.collision_free


def test_refinement_monotone():
    coarse = minimize("E2", PI_20, 20, FAST)
    fine, *_ = descend(prolong(coarse.path, 40), FAST)
    assert polyline_action(fine.polyline()).total <= coarse.action + 1e-8


def test_prolong_preserves_action_of_polyline():
    coarse = seeds("E1", PI_20, 10, FAST)[0][1]
    fine = prolong(coarse, 30)
    # linear interpolation of a polyline leaves the path (and thus the action) unchanged
    assert polyline_action(fine.polyline()).total == pytest.approx(polyline_action(coarse.polyline()).total,
                                                                   rel=1e-13)


@pytest.mark.parametrize("variant", ["E1", "E2"])
def test_mirrored_problem_same_minimum(variant):
    seed = seeds(variant, PI_20, 20, FAST)[0][1]
    plain, *_ = descend(seed, FAST)
    mirrored_value, mirrored_nodes = mirrored_descent(seed, FAST)
    assert mirrored_value == pytest.approx(polyline_action(plain.polyline()).total, abs=1e-6)
    np.testing.assert_allclose(mirrored_nodes, plain.nodes, atol=1e-5)


def _static_ends_path(variant):
    """Nodes frozen near both ends, so every boundary velocity estimate is exactly zero."""
    th = PI_20
    start = build_boundary(BoundaryParams(Side.START, 2.0, 0.7, 1.3))
    side = Side.END_E1 if variant == "E1" else Side.END_E2
    endp = BoundaryParams(side, 0.5, 3.0, 2.3, th)
    end = build_boundary(endp)
    w = np.array([0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1])[1:-1, None, None]
    interior = (1 - w) * start + w * end
    return DiscretePath(variant, th, 8, BoundaryParams(Side.START, 2.0, 0.7, 1.3), endp, interior)


@pytest.mark.parametrize("variant", ["E1", "E2"])
def test_residual_zero_on_constructed_path(variant):
    res = first_variation_residual(_static_ends_path(variant))
    assert res.start <= 1e-13 and res.end <= 1e-13  # zero up to rounding in the relabelled q4


@pytest.mark.parametrize("variant", ["E1", "E2"])
def test_residual_large_on_perturbed_test_paths(variant, refined_minimizers):
    """Test paths with the last node rotated away from theta0 are far from critical."""
    floor = first_variation_residual(refined_minimizers[(variant, 40)]).max
    from fourbody.testpaths import all_tables
    from fractions import Fraction
    for table in all_tables(variant):
        lo = table.interval[0] if table.interval[0] > 0 else table.theta0.frac / 2
        th = RotationAngle(lo)
        path = seed_from_polyline(variant, th, build_test_path(variant, th, table), 40)
        r = first_variation_residual(path).max
        assert r > 1e-2 and r > 300 * floor


def test_residual_needs_four_segments():
    base = seeds("E1", PI_20, 3, FAST)[0][1]
    with pytest.raises(ValueError):
        first_variation_residual(base)


def test_residual_decays_with_refinement(refined_minimizers):
    for v in ("E1", "E2"):
        r = [first_variation_residual(refined_minimizers[(v, n)]).max for n in (40, 80, 160)]
        assert r[0] > r[1] > r[2]
        # pinned constant of the observed N^-3 decay: residual * N^3 at N = 80
        c = r[1] * 80 ** 3
        assert c == pytest.approx({"E1": 0.2511, "E2": 1.8542}[v], rel=0.02)


def test_path_json_round_trip():
    res = minimize("E2", PI_20, 10, FAST)
    data = json.loads(json.dumps(res.to_json()))
    back = DiscretePath.from_json(data)
    np.testing.assert_array_equal(back.nodes, res.path.nodes)
    assert back.theta == res.path.theta
