import numpy as np
import pytest

from fermat_rays import katok_experiment, katok_stationary
from fermat_rays.geometry import RiemannMetric, ScalarField, VectorField, field_from_expressions, sphere, torus
from fermat_rays.geometry import round_metric
from fermat_rays.finsler import StationaryData

ALPHA = 1 / np.sqrt(2) - 0.3

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def katok_report():
    return katok_experiment(ALPHA, n_starts=500, seed=0)


@pytest.fixture(scope="session")
def katok_st():
    return katok_stationary(ALPHA)


@pytest.fixture(scope="session")
def S2():
    return sphere(2)


@pytest.fixture(scope="session")
def T2():
    return torus(2)


@pytest.fixture(scope="session")
def torus_const(T2):
    return StationaryData(RiemannMetric.euclidean(T2), ScalarField.constant(T2, 2.0),
                          VectorField.constant(T2, [0.4, -0.3]))


@pytest.fixture(scope="session")
def static_sphere(S2):
    return StationaryData(round_metric(S2), ScalarField.constant(S2, 1.0), VectorField.zero(S2))


@pytest.fixture(scope="session")
def torus_wavy(T2):
    """Non-constant data on the torus: every term of the triad is exercised."""
    g0 = field_from_expressions(T2, "metric", [["1 + 0.2*sin(2*pi*x2)^2", "0.1*cos(2*pi*x1)"],
                                               ["0.1*cos(2*pi*x1)", "1.5"]])
    beta = field_from_expressions(T2, "scalar", "1 + 0.3*cos(2*pi*x1)*sin(2*pi*x2)")
    delta = field_from_expressions(T2, "vector", ["0.5*sin(2*pi*x1)", "0.2*cos(2*pi*x2)"])
    return StationaryData(g0, beta, delta)
