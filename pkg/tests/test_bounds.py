import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from fourbody.bounds import (CaseBound, KeplerParams, case_bound, case_bounds, g1, g2, kepler_lower_bound,
                             total_collision_bound)
from fourbody.errors import OutOfRange
from fourbody.geometry import RotationAngle
from fourbody.testpaths import evaluate_test_path

PI = math.pi
thetas = st.floats(1e-9, PI / 10, allow_nan=False)

# 30-digit reference values computed with mpmath from the closed forms
KEPLER_PI = 8.10770307019047056588
TOTAL_COLLISION = 12.1615546052857058488
G1_PI_20 = 3.42714227865238397481
G1_ZERO = 2.55376644110756605265
G2_PI_20 = 3.17539775564050585883
G2_ZERO = 2.02692576754761764147
E1_CASE5 = 4.05385153509523528294


def mp_g1(theta):
    with mpmath.workdps(30):
        t = mpmath.mpf(theta)
        return float(mpmath.mpf(3) / 8 * mpmath.cbrt(16) * (mpmath.cbrt(2 * mpmath.pi ** 2) + 2 * mpmath.cbrt(2 * t) ** 2))


def mp_g2(theta):
    with mpmath.workdps(30):
        t = mpmath.mpf(theta)
        c = mpmath.mpf(3) / 8 * mpmath.cbrt(16)
        return float(c * (mpmath.cbrt(mpmath.pi) ** 2 + mpmath.cbrt(t) ** 2 + 2 * mpmath.cbrt(2 * t) ** 2))


def test_kepler_half_turn():
    assert kepler_lower_bound(KeplerParams(1, 4, PI, 1)) == pytest.approx(KEPLER_PI, rel=1e-14)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10))
def test_collision_flag_coincides_at_pi(mu, alpha, T):
    p = KeplerParams(mu, alpha, PI, T)
    assert kepler_lower_bound(p, collision=True) == kepler_lower_bound(p)


def test_total_collision_bound():
    assert total_collision_bound() == pytest.approx(TOTAL_COLLISION, rel=1e-14)
    assert 12.16 <= total_collision_bound() <= 12.17


@pytest.mark.parametrize("theta", [0.0, -0.1, PI + 1e-9])
def test_kepler_rejects_bad_angle(theta):
    with pytest.raises(OutOfRange):
        KeplerParams(1, 4, theta, 1)


def test_kepler_monotone_on_grid():
    grid = np.linspace(0.2, 3.0, 8)
    for field in range(4):
        vals = []
        for x in grid:
            args = [1.0, 4.0, 1.0, 1.0]
            args[field] = x
            vals.append(kepler_lower_bound(KeplerParams(*args)))
        assert np.all(np.diff(vals) > 0)


def test_g1_reference_values():
    assert g1(0.05 * PI) == pytest.approx(G1_PI_20, rel=1e-14)
    assert g1(1e-300) == pytest.approx(G1_ZERO, rel=1e-14)


def test_g2_reference_values():
    assert g2(0.05 * PI) == pytest.approx(G2_PI_20, rel=1e-14)
    assert g2(1e-300) == pytest.approx(G2_ZERO, rel=1e-14)


@given(thetas)
def test_g_match_high_precision(theta):
    assert g1(theta) == pytest.approx(mp_g1(theta), rel=1e-14)
    assert g2(theta) == pytest.approx(mp_g2(theta), rel=1e-14)


@pytest.mark.parametrize("theta", [0.0, -1e-3, PI / 10 * 1.001, 1.0])
def test_g_domain(theta):
    for g in (g1, g2):
        with pytest.raises(OutOfRange):
            g(theta)


def test_g1_beats_first_test_path():
    th = RotationAngle.parse("539/10000pi")
    assert g1(th.radians) > evaluate_test_path("E1", th)


def test_g2_beats_last_e2_test_path():
    th = RotationAngle.parse("83/1250pi")
    assert g2(th.radians) > evaluate_test_path("E2", th)


def test_case5_constant():
    cb = CaseBound("E1", 5)
    for t in (1e-6, 0.1, PI / 10):
        assert cb.value_at(t) == pytest.approx(E1_CASE5, rel=1e-14)


@given(thetas)
def test_binding_cases_equal_g(theta):
    assert case_bound(CaseBound("E1", 3), theta) == g1(theta)
    assert case_bound(CaseBound("E2", 3), theta) == g2(theta)
    assert case_bound(CaseBound("E2", 1), theta) == g2(theta)


@given(thetas)
def test_g1_is_min_of_e1_cases(theta):
    vals = [cb.value_at(theta) for cb in case_bounds("E1")]
    assert min(vals) == pytest.approx(g1(theta), rel=1e-12)


@given(thetas)
def test_g2_below_every_e2_case(theta):
    for cb in case_bounds("E2"):
        assert g2(theta) <= cb.value_at(theta) * (1 + 1e-12)


def test_printed_case2_coefficient_is_four_times_larger():
    t = 0.03 * PI
    rep = case_bound(CaseBound("E2", 2), t)
    printed = case_bound(CaseBound("E2", 2), t, e2_case2_coefficient="printed")
    assert printed == pytest.approx(4 * rep, rel=1e-14)
    assert printed > 2 * g2(t)


def test_unknown_case_rejected():
    with pytest.raises(ValueError):
        CaseBound("E2", 5)


def test_g_increasing_and_concave_on_grid():
    t = np.linspace(PI / 10 / 1000, PI / 10, 1000)
    for g in (g1, g2):
        v = g(t)
        assert np.all(np.diff(v) > 0)
        assert np.all(np.diff(v, 2) < 0)
