import csv

import numpy as np
import pytest

from fermat_rays import (
    InvariantViolation,
    RiemannMetric,
    SampledCurve,
    ScalarField,
    StationaryData,
    StationarySpacetime,
    VectorField,
    euclidean,
    fermat_correspondence_check,
    fermat_from_stationary,
    finsler_length,
    null_geodesic,
    t_periodic_rays,
    time_component,
)
from fermat_rays.spacetime import lift_closed_geodesic, rays_equivalent, write_geodesic_csv, write_ray_csv

from conftest import ALPHA
from oracles import fd_christoffel, katok_lengths


def flat_st(beta=1.0, delta=(0.0, 0.0)):
    R2 = euclidean(2)
    return StationarySpacetime(StationaryData(RiemannMetric.euclidean(R2), ScalarField.constant(R2, beta),
                                              VectorField.constant(R2, delta)))


def test_lorentz_metric_matches_interval(torus_wavy):
    st = StationarySpacetime(torus_wavy)
    rng = np.random.default_rng(30)
    x = rng.random((50, 2))
    v = rng.standard_normal((50, 2))
    tau = rng.standard_normal(50)
    L = st.metric(x)
    w = np.concatenate([v, tau[:, None]], axis=1)
    assert np.allclose(np.einsum("ni,nij,nj->n", w, L, w), st.interval(x, v, tau), rtol=1e-13, atol=1e-13)
    # the Killing field d/dt has l(K, K) = -beta
    assert np.allclose(L[:, 2, 2], -torus_wavy.beta(x))
    # spacetime Christoffels against finite differences of the spatial dependence
    for i in range(5):
        def gfun(y):
            return st.metric(y[:2])
        G = st.christoffel(x[i])
        assert np.max(np.abs(G - fd_christoffel(gfun, np.append(x[i], 0.3)))) < 1e-6


def test_null_tau_is_positive_root(katok_st):
    st = StationarySpacetime(katok_st)
    rng = np.random.default_rng(31)
    x, c = katok_st.manifold.sample(rng, 100)
    v = rng.standard_normal((100, 2))
    tau = st.null_tau(x, v, c)
    assert np.all(tau > 0)
    assert np.max(np.abs(st.interval(x, v, tau, c))) < 1e-12
    # tau is the Fermat metric itself
    assert np.allclose(tau, fermat_from_stationary(katok_st)(x, v, c), rtol=1e-13)
    bad = StationarySpacetime(StationaryData(RiemannMetric.euclidean(euclidean(2)),
                                             ScalarField.constant(euclidean(2), -1.0),
                                             VectorField.zero(euclidean(2))))
    with pytest.raises(InvariantViolation):
        bad.null_tau(np.zeros(2), np.ones(2))


def test_minkowski_ray():
    ray = null_geodesic(flat_st(), [0.5, -1.0], [1.0, 0.0], 4.0, t0=2.0)
    s = np.linspace(0, 4, 9)
    x, t, xd, td, _ = ray.at(s)
    assert np.allclose(x, np.stack([0.5 + s, -1.0 + 0 * s], 1), atol=1e-13)
    assert np.allclose(t, 2.0 + s, atol=1e-13)
    assert ray.null_drift < 1e-14 and ray.future_pointing


def test_static_rescaling_rate():
    ray = null_geodesic(flat_st(beta=4.0), [0.0, 0.0], [1.0, 0.0], 3.0)
    assert np.allclose(np.diff(ray.t) / np.diff(ray.s), 0.5, rtol=1e-13)
    F = fermat_from_stationary(flat_st(beta=4.0).data)
    assert F(np.zeros(2), np.array([1.0, 0.0])) == pytest.approx(0.5)


def test_katok_null_drift_three_revolutions(katok_st):
    st = StationarySpacetime(katok_st)
    # equatorial start: one revolution is under 2 pi / (1 - alpha) in Fermat length
    s_max = 3 * 2 * np.pi / (1 - ALPHA) * 1.05
    for v0 in ([0.0, 1.0], [0.0, -1.0], [0.3, 1.0]):
        ray = null_geodesic(st, [1.0, 0.0], np.array(v0) / 2, s_max)
        assert ray.null_drift < 1e-8
        assert ray.energy_drift < 1e-8
        assert ray.future_pointing


def test_time_component_examples(katok_st):
    data = flat_st().data
    s = np.linspace(0, 3, 31)
    seg = SampledCurve(s, np.stack([s, 0 * s], 1), np.tile([1.0, 0.0], (31, 1)))
    t = time_component(data, seg, t0=1.0)
    assert t[-1] - t[0] == pytest.approx(3.0, rel=1e-14)
    w = np.linspace(0, 1, 201)
    curve = SampledCurve(w, np.stack([0.4 * np.cos(3 * w), 0.4 * np.sin(2 * w)], 1))
    t = time_component(katok_st, curve)
    assert abs(t[-1] - finsler_length(fermat_from_stationary(katok_st), curve)) < 1e-12


def test_correspondence_flat_is_exact():
    rep = fermat_correspondence_check(flat_st(2.0, (0.3, 0.1)), [0.0, 0.0], [0.6, 0.8], 3.0)
    assert rep.sup_distance < 1e-12 and rep.increment_error < 1e-12 and rep.t_profile_error < 1e-12


def test_correspondence_on_katok(katok_st):
    st = StationarySpacetime(katok_st)
    rng = np.random.default_rng(33)
    x, c = katok_st.manifold.sample(rng, 3)
    v = rng.standard_normal((3, 2))
    for i in range(3):
        rep = fermat_correspondence_check(st, x[i], v[i], 6.0, int(c[i]))
        assert rep.sup_distance < 1e-5
        assert rep.increment_error < 1e-6 and rep.t_profile_error < 1e-6
        assert rep.null_drift < 1e-8 and rep.F_drift < 1e-8


def test_static_sphere_periodic_rays(static_sphere):
    reps, res = t_periodic_rays(StationarySpacetime(static_sphere), n_starts=48, seed=4)
    assert res.continuum_suspected
    assert len(reps) >= 1
    for r in reps:
        assert r.period == pytest.approx(2 * np.pi, rel=1e-8)


def test_katok_periodic_rays_and_translation(katok_st):
    st = StationarySpacetime(katok_st)
    reps, res = t_periodic_rays(st, n_starts=500, seed=0)
    assert len(reps) == 2
    assert np.allclose([r.period for r in reps], katok_lengths(ALPHA), rtol=1e-4)
    for r in reps:
        assert max(r.residuals.values()) < 1e-7
        assert r.ray.future_pointing and r.ray.null_drift < 1e-8
    shifted = lift_closed_geodesic(st, reps[0].base, t0=3.7)
    assert shifted.period == pytest.approx(reps[0].period, rel=1e-10)
    assert rays_equivalent(reps[0], shifted)
    assert not rays_equivalent(reps[0], reps[1])


def test_csv_columns(tmp_path):
    st = flat_st()
    ray = null_geodesic(st, [0.0, 0.0], [1.0, 0.0], 1.0)
    p = tmp_path / "ray.csv"
    write_ray_csv(ray, p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["s", "chart", "x1", "x2", "t", "constraint"]
    assert float(rows[-1][0]) == 1.0
    from fermat_rays import integrate_geodesic

    F = fermat_from_stationary(st.data)
    path = integrate_geodesic(F, [0.0, 0.0], [1.0, 0.0], 1.0)
    q = tmp_path / "geo.csv"
    write_geodesic_csv(path, F, q)
    rows = list(csv.reader(open(q)))
    assert rows[0] == ["s", "chart", "x1", "x2", "v1", "v2", "F"]
