import numpy as np
import pytest
from hypothesis import settings

from fourbody.geometry import RotationAngle
from fourbody.minimizer import MinimizeOptions, descend, minimize, newton_polish, prolong

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

PI_20 = RotationAngle.pi_fraction(1, 20)


def random_com_nodes(rng, n_nodes, box=3.0, min_sep=0.1):
    """Random uniform-in-box nodes projected onto the centre-of-mass plane, with a separation floor."""
    from fourbody.action import segment_min_separation
    while True:
        q = rng.uniform(-box, box, size=(n_nodes, 4, 2))
        q -= q.mean(axis=1, keepdims=True)
        if segment_min_separation(q) >= min_sep:
            return q


@pytest.fixture(scope="session")
def refined_minimizers():
    """Converged pi/20 minimizers at N = 40, 80, 160 for both variants (prolonged and re-solved)."""
    out = {}
    opts = MinimizeOptions(restarts=1)
    for v in ("E1", "E2"):
        path = minimize(v, PI_20, 40, opts).path
        out[(v, 40)] = path
        for n in (80, 160):
            path, *_ = descend(prolong(path, n), opts)
            path = newton_polish(path, opts)
            out[(v, n)] = path
    return out


ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
