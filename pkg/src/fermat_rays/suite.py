"""Invariant suite run by ``fermat-rays verify``; each check reports value, threshold and verdict."""
from __future__ import annotations

import numpy as np

from .finsler import (
    RandersData,
    SampledCurve,
    StationaryData,
    ZermeloData,
    comparability_constants,
    fermat_from_stationary,
    finsler_energy,
    finsler_length,
    fundamental_tensor,
    legendre_check,
    randers_to_zermelo,
    reversibility,
    stationary_from_zermelo,
    zermelo_from_stationary,
    zermelo_to_randers,
)
from .geometry import ScalarField


def as_stationary(data):
    if isinstance(data, StationaryData):
        return data
    if isinstance(data, RandersData):
        data = randers_to_zermelo(data)
    if isinstance(data, ZermeloData):
        return stationary_from_zermelo(data)
    raise TypeError(f"cannot read {type(data).__name__} as stationary data")


def positive_gauge(manifold):
    """A non-constant positive function for gauge checks."""

    def jet(x, chart):
        X = manifold.to_ambient(x, chart)
        s = np.sin(X[..., 0])
        f = 2.0 + s
        if manifold.ambient_dim:
            # chain rule through the stereographic embedding
            grad = np.stack(
                [np.cos(X[..., 0]) * manifold.ambient_tangent(x, np.eye(manifold.dim)[k] + 0 * x, chart)[..., 0]
                 for k in range(manifold.dim)], axis=-1)
        else:
            grad = np.zeros_like(x)
            grad[..., 0] = np.cos(x[..., 0])
        return f, grad

    return ScalarField(manifold, jet, "2 + sin(X1)")


def sample_tangent(manifold, rng, n, bounds=None):
    x, c = manifold.sample(rng, n, bounds)
    return x, rng.standard_normal((n, manifold.dim)), c


def random_curves(manifold, rng, n_curves, n_samples=101, bounds=None, modes=3):
    """Smooth random curves on ``[0, b]`` with exact velocities, kept inside one chart."""
    out = []
    for _ in range(n_curves):
        x0, c = manifold.sample(rng, 1, bounds)
        b = rng.uniform(0.5, 2.0)
        s = np.linspace(0.0, b, n_samples)
        A = rng.normal(scale=0.15, size=(modes, manifold.dim))
        Bc = rng.normal(scale=0.15, size=(modes, manifold.dim))
        k = np.arange(1, modes + 1)[:, None] * 2 * np.pi / b
        w = k * s[None]
        x = x0 + np.einsum("ms,md->sd", np.sin(w), A) + np.einsum("ms,md->sd", 1 - np.cos(w), Bc)
        v = np.einsum("ms,md->sd", k * np.cos(w), A) + np.einsum("ms,md->sd", k * np.sin(w), Bc)
        if manifold.ambient_dim:
            # keep the curve well inside its chart
            r = np.linalg.norm(x, axis=1).max()
            if r > 1.5:
                x, v = x * 1.5 / r, v * 1.5 / r
        out.append(SampledCurve(s, x, v, int(c[0])))
    return out


def _check(value, threshold, op="<"):
    ok = value < threshold if op == "<" else value <= threshold
    return {"value": float(value), "threshold": float(threshold), "passed": bool(ok)}


def verify_suite(data, n_samples=1000, seed=0, bounds=None, n_rays=4, s_max=6.0, n_curves=1000):
    """Triad, conversion, homogeneity, Legendre, Hoelder, comparability, reversibility and Fermat checks."""
    from .spacetime import StationarySpacetime, fermat_correspondence_check

    st = as_stationary(data)
    m = st.manifold
    rng = np.random.default_rng(seed)
    F = fermat_from_stationary(st)
    z = zermelo_from_stationary(st)
    r = zermelo_to_randers(z)
    Z, R = z.metric(), r.metric()
    x, v, c = sample_tangent(m, rng, n_samples, bounds)
    f = F(x, v, c)
    out = {}
    out["triad"] = _check(max(np.max(np.abs(Z(x, v, c) / f - 1)), np.max(np.abs(R(x, v, c) / f - 1))), 1e-10)

    z2 = randers_to_zermelo(r)
    scale = np.max(np.abs(z.g(x, c)))
    rt = max(np.max(np.abs(z2.g(x, c) - z.g(x, c))) / scale, np.max(np.abs(z2.W(x, c) - z.W(x, c))))
    out["round_trip"] = _check(rt, 1e-12)

    g1 = fermat_from_stationary(stationary_from_zermelo(z))
    g2 = fermat_from_stationary(stationary_from_zermelo(z, positive_gauge(m)))
    out["gauge"] = _check(np.max(np.abs(g2(x, v, c) / g1(x, v, c) - 1)), 1e-12)

    hom = max(np.max(np.abs(F(x, lam * v, c) / (lam * f) - 1)) for lam in (0.5, 2.0, 7.3))
    out["homogeneity"] = _check(hom, 1e-12)
    g = fundamental_tensor(F, x, v, c)
    out["euler_identity"] = _check(np.max(np.abs(np.einsum("ni,nij,nj->n", v, g, v) / f**2 - 1)), 1e-10)
    out["legendre"] = _check(np.max(legendre_check(z, x[:100], v[:100], c[:100])), 1e-8)

    curves = random_curves(m, rng, n_curves, bounds=bounds)
    L = np.array([finsler_length(F, cv) for cv in curves])
    E = np.array([finsler_energy(F, cv) for cv in curves])
    ba = np.array([cv.s[-1] - cv.s[0] for cv in curves])
    out["hoelder_violations"] = _check(int(np.sum(L**2 > E * ba * (1 + 1e-12))), 0, "<=")

    est = comparability_constants(F, st.g0, n_samples=2000, seed=seed, bounds=bounds, n_validate=10000)
    out["comparability_violations"] = _check(est.violations, 0, "<=")

    rep = reversibility(st, bounds=bounds)
    out["reversibility"] = _check(abs(rep.lambda_ - rep.numeric_lambda) / rep.lambda_, 1e-6)

    sp_ = StationarySpacetime(st)
    xr, vr, cr = sample_tangent(m, rng, n_rays, bounds)
    worst = np.zeros(4)
    for i in range(n_rays):
        rr = fermat_correspondence_check(sp_, xr[i], vr[i], s_max, int(cr[i]))
        worst = np.maximum(worst, [rr.sup_distance, rr.increment_error, rr.null_drift, rr.F_drift])
    out["fermat_sup_distance"] = _check(worst[0], 1e-5)
    out["fermat_t_increment"] = _check(worst[1], 1e-6)
    out["null_drift"] = _check(worst[2], 1e-8)
    out["F_drift"] = _check(worst[3], 1e-8)
    return out
