import numpy as np
import pytest

from fermat_rays import (
    DomainError,
    EscapeError,
    InvariantViolation,
    RandersData,
    RiemannMetric,
    VectorField,
    ZermeloData,
    christoffel,
    classify_distinct,
    detect_multiplicity,
    euclidean,
    field_from_expressions,
    find_closed_geodesics,
    geodesic_spray,
    homothety,
    integrate_geodesic,
    integrate_geodesics,
    katok_data,
    katok_experiment,
    robles_geodesic,
    round_metric,
    sphere,
    torus,
)
from fermat_rays.geodesics import HomothetyData, workers

from conftest import ALPHA
from oracles import SympyGeodesics, katok_chart_F, katok_lengths


def riemann_F(metric):
    return ZermeloData(metric, VectorField.zero(metric.manifold)).metric()


# --- spray ------------------------------------------------------------------------------


def test_spray_reduces_to_christoffel():
    S = sphere(2)
    g = round_metric(S)
    F = riemann_F(g)
    rng = np.random.default_rng(20)
    x = rng.uniform(-1.5, 1.5, (50, 2))
    v = rng.standard_normal((50, 2))
    for c in (0, 1):
        a = geodesic_spray(F, x, v, c)
        b = -np.einsum("nkij,ni,nj->nk", christoffel(g, x, c), v, v)
        assert np.allclose(a, b, atol=1e-12)


def test_flat_randers_spray_vanishes():
    R2 = euclidean(2)
    F = RandersData(RiemannMetric.euclidean(R2, 2.0), VectorField.constant(R2, [0.3, -0.2])).metric()
    rng = np.random.default_rng(21)
    assert np.max(np.abs(geodesic_spray(F, rng.standard_normal((100, 2)), rng.standard_normal((100, 2))))) < 1e-14
    with pytest.raises(DomainError):
        geodesic_spray(F, np.zeros(2), np.zeros(2))


def test_spray_against_symbolic_euler_lagrange():
    """Katok chart spray vs Euler-Lagrange equations derived by sympy from a hand-written F."""
    F = katok_data(ALPHA).metric()
    expr, u, w = katok_chart_F(ALPHA)
    ref = SympyGeodesics(expr, u, w)
    rng = np.random.default_rng(22)
    for _ in range(20):
        x = rng.uniform(-1.2, 1.2, 2)
        v = rng.standard_normal(2)
        assert F(x, v, 0) == pytest.approx(ref.F(x, v), rel=1e-13)
        assert np.allclose(geodesic_spray(F, x, v, 0), ref.rhs(0, np.concatenate([x, v]))[2:], rtol=1e-10,
                           atol=1e-12)


# --- integration --------------------------------------------------------------------------


def test_integrator_against_solve_ivp():
    F = katok_data(ALPHA).metric()
    expr, u, w = katok_chart_F(ALPHA)
    ref = SympyGeodesics(expr, u, w)
    rng = np.random.default_rng(23)
    for _ in range(5):
        x0 = rng.uniform(-0.5, 0.5, 2)
        v0 = rng.standard_normal(2)
        v0 /= F(x0, v0)
        # short enough to stay in the north chart's shrunken box
        p = integrate_geodesic(F, x0, v0, 1.0, 0, tol=1e-12)
        assert np.all(p.chart == 0)
        s = np.linspace(0, 1.0, 11)
        xr, vr = ref.solve(x0, v0, 1.0, s)
        xp, vp, _ = p.at(s)
        assert np.max(np.abs(xp - xr)) < 1e-9 and np.max(np.abs(vp - vr)) < 1e-9


def test_euclidean_endpoint():
    F = riemann_F(RiemannMetric.euclidean(euclidean(2)))
    p = integrate_geodesic(F, [0.0, 0.0], [1.0, 0.0], 3.0)
    assert np.allclose(p.x[-1], [3.0, 0.0], atol=1e-13)
    assert p.length == pytest.approx(3.0)
    with pytest.raises(DomainError):
        integrate_geodesic(F, [0.0, 0.0], [0.0, 0.0], 1.0)


def test_great_circles_close_at_2pi():
    S = sphere(2)
    F = riemann_F(round_metric(S))
    rng = np.random.default_rng(24)
    x, c = S.sample(rng, 10)
    v = rng.standard_normal((10, 2))
    v /= F(x, v, c)[:, None]
    for p in integrate_geodesics(F, x, v, 2 * np.pi, c, tol=1e-12):
        X0, Xe = S.to_ambient(p.x[0], p.chart[0]), S.to_ambient(p.x[-1], p.chart[-1])
        assert np.linalg.norm(Xe - X0) < 1e-6
        assert p.relative_drift < 1e-10


def test_constant_wind_endpoint():
    R2 = euclidean(2)
    z = ZermeloData(RiemannMetric.euclidean(R2), VectorField.constant(R2, [0.5, 0.0]))
    F = z.metric()
    v0 = np.array([0.0, 1.0]) + np.array([0.5, 0.0])  # unit g-velocity toward (0, 1) plus the drift
    assert F(np.zeros(2), v0) == pytest.approx(1.0, rel=1e-15)
    p = integrate_geodesic(F, [0.0, 0.0], v0, 1.0)
    assert np.allclose(p.x[-1], [0.5, 1.0], atol=1e-12)


def test_F_conservation_on_katok():
    F = katok_data(ALPHA).metric()
    rng = np.random.default_rng(25)
    x, c = F.manifold.sample(rng, 10)
    v = rng.standard_normal((10, 2))
    for p in integrate_geodesics(F, x, v, 10.0, c, tol=1e-10):
        assert p.relative_drift < 1e-8


def test_convergence_order_smoke():
    """Tightening the tolerance tenfold shrinks the endpoint error at least tenfold."""
    S = sphere(2)
    F = riemann_F(round_metric(S))
    x0, v0 = np.array([0.3, 0.1]), np.array([0.2, 1.0])
    v0 /= F(x0, v0)
    X0 = S.to_ambient(x0, 0)
    errs = []
    for tol in (1e-5, 1e-6, 1e-7, 1e-8, 1e-9):
        p = integrate_geodesic(F, x0, v0, 2 * np.pi, 0, tol)
        errs.append(np.linalg.norm(S.to_ambient(p.x[-1], p.chart[-1]) - X0))
    assert all(a / b >= 10 for a, b in zip(errs, errs[1:]))


def test_escape_raises():
    box_F = riemann_F(RiemannMetric.euclidean(euclidean(2)))
    from fermat_rays.geometry import Chart, ChartManifold

    box = ChartManifold("box", 2, (Chart("box", -np.ones(2), np.ones(2)),))
    F = riemann_F(RiemannMetric.euclidean(box))
    with pytest.raises(EscapeError):
        integrate_geodesic(F, [0.0, 0.0], [1.0, 0.0], 5.0)
    assert integrate_geodesic(box_F, [0.0, 0.0], [1.0, 0.0], 5.0).x[-1][0] == pytest.approx(5.0)


def test_worker_env(monkeypatch):
    monkeypatch.setenv("FERMAT_RAYS_THREADS", "1")
    assert workers() == 1
    monkeypatch.setenv("FERMAT_RAYS_THREADS", "x")
    with pytest.raises(Exception):
        workers()


# --- Robles construction ------------------------------------------------------------------


def test_robles_zero_wind_is_g_geodesic():
    S = sphere(2)
    z = ZermeloData(round_metric(S), VectorField.zero(S))
    hom = homothety(z.g, z.W)
    assert hom.sigma == 0 and hom.valid
    x0, v0 = np.array([0.2, -0.4]), np.array([1.0, 0.5])
    p = robles_geodesic(z, hom, x0, v0, 3.0)
    q = integrate_geodesic(z.metric(), x0, v0 / z.metric()(x0, v0), 3.0, 0, 1e-12)
    xq, _, cq = q.at(p.s)
    assert np.max(np.linalg.norm(S.to_ambient(p.x, p.chart) - S.to_ambient(xq, cq), axis=1)) < 1e-9


def test_robles_katok_vs_direct():
    z = katok_data(ALPHA)
    hom = homothety(z.g, z.W)
    assert abs(hom.sigma) < 1e-12 and hom.valid
    F = z.metric()
    S = z.manifold
    rng = np.random.default_rng(26)
    x, c = S.sample(rng, 20)
    v = rng.standard_normal((20, 2))
    worst = 0.0
    for i in range(20):
        p = robles_geodesic(z, hom, x[i], v[i], 6.0, int(c[i]), n_samples=121)
        assert np.max(np.abs(F(p.x, p.v, p.chart) - 1)) < 1e-6
        q = integrate_geodesic(F, x[i], v[i] / F(x[i], v[i], c[i]), 6.0, int(c[i]), 1e-12)
        xq, _, cq = q.at(p.s)
        worst = max(worst, np.max(np.linalg.norm(S.to_ambient(p.x, p.chart) - S.to_ambient(xq, cq), axis=1)))
    assert worst < 1e-5


def test_robles_proper_homothety_closed_form():
    """W = c x on the plane: L_W g = 2c g, and the geodesic is x0 e^{ct} + u0 (e^{ct} - 1)/c."""
    R2 = euclidean(2)
    cst = 0.1
    z = ZermeloData(RiemannMetric.euclidean(R2), field_from_expressions(R2, "vector", ["0.1*x1", "0.1*x2"]))
    hom = homothety(z.g, z.W, bounds=[[-1, 1], [-1, 1]])
    assert hom.sigma == pytest.approx(0.2, rel=1e-14)
    x0 = np.array([0.2, 0.1])
    v0 = np.array([0.3, 1.0])
    p = robles_geodesic(z, hom, x0, v0, 3.0)
    u0 = v0 / z.metric()(x0, v0) - cst * x0
    e = np.exp(cst * p.s)[:, None]
    exact = e * x0 + u0 * (e - 1) / cst
    assert np.max(np.abs(p.x - exact)) < 1e-9
    q = integrate_geodesic(z.metric(), x0, v0 / z.metric()(x0, v0), 3.0, 0, 1e-12)
    assert np.max(np.abs(q.at(p.s)[0] - exact)) < 1e-9


def test_robles_refuses_non_homothety():
    R2 = euclidean(2)
    z = ZermeloData(RiemannMetric.euclidean(R2), field_from_expressions(R2, "vector", ["0.1*x1^2", "0"]))
    hom = homothety(z.g, z.W, bounds=[[-1, 1], [-1, 1]])
    assert not hom.valid
    with pytest.raises(InvariantViolation):
        robles_geodesic(z, hom, np.zeros(2), np.array([1.0, 0.0]), 1.0)
    with pytest.raises(InvariantViolation):
        robles_geodesic(z, HomothetyData(0.0, 1.0), np.zeros(2), np.array([1.0, 0.0]), 1.0)


# --- closed geodesics -----------------------------------------------------------------------


def test_round_sphere_search():
    S = sphere(2)
    res = find_closed_geodesics(riemann_F(round_metric(S)), n_starts=64, s_max=4 * np.pi, seed=1)
    assert res.continuum_suspected
    assert len(res) >= 1
    assert np.allclose(res.lengths, 2 * np.pi, rtol=1e-8)


def test_flat_torus_search():
    T = torus(2)
    res = find_closed_geodesics(riemann_F(RiemannMetric.euclidean(T)), n_starts=32, s_max=1.5, seed=2,
                                max_candidates=8)
    assert len(res) >= 1
    assert min(res.lengths) == pytest.approx(1.0, rel=1e-8)


def test_katok_census(katok_report):
    rep = katok_report
    assert rep.count == 2
    assert np.allclose(rep.lengths, katok_lengths(ALPHA), rtol=1e-4)
    assert max(rep.relative_errors) < 1e-4
    assert not rep.continuum_suspected
    assert rep.bound == pytest.approx(2 * np.pi / (1 + ALPHA), rel=1e-12)


def test_katok_geodesics_reclose_at_tighter_tolerance(katok_report):
    for g in katok_report.search.geodesics:
        p = g.reintegrate(tol=1e-13)
        x0, v0, c0 = g.initial
        S = p.manifold
        assert np.linalg.norm(S.to_ambient(p.x[-1], p.chart[-1]) - S.to_ambient(x0, c0)) < 1e-8
        assert g.closure_residual() < 1e-8


def test_classifier(katok_report):
    short, long_ = katok_report.search.geodesics
    assert classify_distinct(short, short.shifted(0.37)) == "same"
    double = short.iterate(2)
    assert classify_distinct(short, double) == "iterate"
    assert double.length / short.length == pytest.approx(2.0, rel=1e-12)
    assert detect_multiplicity(double) == 2
    assert detect_multiplicity(short) == 1
    assert classify_distinct(short, long_) == "distinct"
    assert classify_distinct(long_, short) == "distinct"


def test_katok_errors_and_reversible_limit():
    with pytest.raises(InvariantViolation):
        katok_data(1.2)
    with pytest.raises(InvariantViolation):
        katok_data(1.0)
    rep = katok_experiment(0.0, n_starts=64, seed=3)
    assert rep.continuum_suspected
    assert np.allclose(rep.lengths, 2 * np.pi, rtol=1e-8)


def test_search_needs_compact_manifold():
    from fermat_rays import ConfigurationError

    with pytest.raises(ConfigurationError):
        find_closed_geodesics(riemann_F(RiemannMetric.euclidean(euclidean(2))), n_starts=4)
