"""Standard stationary spacetimes ``(M x R, g0 + 2 delta dt - beta dt^2)`` and their light rays."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import EscapeError, InvariantViolation
from .finsler import SampledCurve, _lower, cumulative_length, fermat_from_stationary
from .geodesics import (
    _position_gap,
    classify_distinct,
    find_closed_geodesics,
    integrate_geodesic,
    phase,
    run_chunked,
)
from .integrate import integrate_batch


class StationarySpacetime:
    """Lorentzian metric ``l((v, tau), (v, tau)) = g0(v, v) + 2 g0(delta, v) tau - beta tau^2``."""

    def __init__(self, data):
        self.data = data
        self.manifold = data.manifold

    def jet(self, x, chart=0):
        """``l`` and its spatial derivatives; the last coordinate is ``t``, on which nothing depends."""
        d = self.data
        g0, dg0 = d.g0.jet(x, chart)
        b, db = d.beta_jet(x, chart)
        dl, Jdl = _lower(g0, dg0, *d.delta.jet(x, chart))
        n = self.manifold.dim
        batch = g0.shape[:-2]
        L = np.empty(batch + (n + 1, n + 1))
        L[..., :n, :n] = g0
        L[..., :n, n] = L[..., n, :n] = dl
        L[..., n, n] = -b
        dL = np.zeros(batch + (n + 1, n + 1, n + 1))
        dL[..., :n, :n, :n] = dg0
        dL[..., :n, n, :n] = dL[..., n, :n, :n] = Jdl
        dL[..., n, n, :n] = -db
        return L, dL

    def metric(self, x, chart=0):
        return self.jet(x, chart)[0]

    def interval(self, x, v, tau, chart=0):
        """``l((v, tau), (v, tau))`` evaluated term by term."""
        d = self.data
        g0 = d.g0(x, chart)
        dv = np.einsum("...i,...ij,...j->...", d.delta(x, chart), g0, v)
        return np.einsum("...i,...ij,...j->...", v, g0, v) + 2.0 * dv * tau - d.beta(x, chart) * tau**2

    def christoffel(self, x, chart=0):
        L, dL = self.jet(x, chart)
        t = np.swapaxes(dL, -1, -2) + dL - np.moveaxis(dL, -1, -3)
        return 0.5 * np.einsum("...km,...mij->...kij", np.linalg.inv(L), t)

    def killing_energy(self, x, v, tau, chart=0):
        """``l(gamma', d/dt) = g0(delta, v) - beta tau``, conserved along geodesics."""
        d = self.data
        dv = np.einsum("...i,...ij,...j->...", d.delta(x, chart), d.g0(x, chart), v)
        return dv - d.beta(x, chart) * tau

    def null_tau(self, x, v, chart=0):
        """Positive root ``tau`` of ``l((v, tau), (v, tau)) = 0``."""
        d = self.data
        g0 = d.g0(x, chart)
        b = d.beta(x, chart)
        dv = np.einsum("...i,...ij,...j->...", d.delta(x, chart), g0, v)
        vv = np.einsum("...i,...ij,...j->...", v, g0, v)
        disc = dv**2 + b * vv
        if np.any(~(b > 0)) or np.any(~(disc > 0)):
            raise InvariantViolation("no future-pointing null completion (beta <= 0 or v = 0)")
        return (dv + np.sqrt(disc)) / b


@dataclass
class LightRay:
    """Samples of a null geodesic ``(x(s), t(s))`` with its diagnostics."""

    s: np.ndarray
    x: np.ndarray
    t: np.ndarray
    xdot: np.ndarray
    tdot: np.ndarray
    chart: np.ndarray
    constraint: np.ndarray
    energy: np.ndarray
    trajectory: object = field(default=None, repr=False)

    @property
    def null_drift(self):
        return float(np.max(np.abs(self.constraint)))

    @property
    def energy_drift(self):
        return float(np.max(np.abs(self.energy - self.energy[0])) / abs(self.energy[0]))

    @property
    def future_pointing(self):
        return bool(np.all(self.tdot > 0))

    def at(self, s):
        """``(x, t, xdot, tdot, chart)`` from the dense output."""
        y, c = self.trajectory.at(s)
        n = self.x.shape[-1]
        return y[..., :n], y[..., n], y[..., n + 1 : 2 * n + 1], y[..., 2 * n + 1], c


def _null_rhs(st):
    n = st.manifold.dim

    def rhs(y, c):
        x = y[:, :n]
        u = y[:, n + 1 :]
        Gam = st.christoffel(x, c)
        return np.concatenate([u, -np.einsum("...kij,...i,...j->...k", Gam, u, u)], axis=1)

    return rhs


def _ray(st, tr):
    n = st.manifold.dim
    s, y, c = tr.nodes()
    x, t, v, tau = y[:, :n], y[:, n], y[:, n + 1 : 2 * n + 1], y[:, 2 * n + 1]
    vv = np.einsum("...i,...ij,...j->...", v, st.data.g0(x, c), v)
    return LightRay(s, x, t, v, tau, c, st.interval(x, v, tau, c) / vv, st.killing_energy(x, v, tau, c), tr)


def null_geodesics(st, x0, v0, s_max, t0=0.0, chart=0, tol=1e-11):
    """Batched future-pointing null geodesics in full ``M x R`` coordinates."""
    m = st.manifold
    n = m.dim
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    N = len(x0)
    chart = np.broadcast_to(np.asarray(chart, dtype=int), (N,))
    for c in np.unique(chart):
        m.check_point(x0[chart == c], int(c))
    tau0 = st.null_tau(x0, v0, chart)
    t0 = np.broadcast_to(np.asarray(t0, dtype=float), (N,))
    y0 = np.concatenate([x0, t0[:, None], v0, tau0[:, None]], axis=1)
    trajs = run_chunked(
        lambda y, c, s: integrate_batch(_null_rhs(st), m, y, c, s, rtol=tol, atol=tol * 1e-2,
                                        vectors=(slice(n + 1, 2 * n + 1),), dense=True),
        y0, chart, s_max,
    )
    out = []
    for tr in trajs:
        if tr.escaped:
            raise EscapeError(f"light ray left the atlas at s={tr.exit_time:.6g}", tr.exit_time)
        out.append(_ray(st, tr))
    return out


def null_geodesic(st, x0, v0, s_max, t0=0.0, chart=0, tol=1e-11):
    return null_geodesics(st, [x0], [v0], s_max, [t0], [chart], tol)[0]


def time_component(data, curve, t0=0.0):
    """Arrival-time profile ``t(s) = t0 + int_0^s F(x, x')`` along a sampled spatial curve."""
    return t0 + cumulative_length(fermat_from_stationary(data), curve)


@dataclass
class CorrespondenceReport:
    sup_distance: float
    t_profile_error: float
    t_increment: float
    fermat_length: float
    null_drift: float
    F_drift: float
    energy_drift: float
    future_pointing: bool

    @property
    def increment_error(self):
        return abs(self.t_increment - self.fermat_length)


def fermat_correspondence_check(st, x0, v0, s_max, chart=0, tol=1e-11, n_samples=4001, n_compare=401):
    """Integrate a light ray and the Fermat geodesic with matched initial data and compare them.

    The ray's spatial track is reparametrized by accumulated Fermat length
    (monotone cubic inverse), then compared pointwise with the Fermat
    geodesic at equal arclength.
    """
    m = st.manifold
    F = fermat_from_stationary(st.data)
    ray = null_geodesic(st, x0, v0, s_max, 0.0, chart, tol)
    s = np.linspace(0.0, s_max, n_samples)
    x, t, xd, td, c = ray.at(s)
    sigma = cumulative_length(F, SampledCurve(s, x, xd, c))
    t_err = float(np.max(np.abs((t - t[0]) - sigma)))
    L = float(sigma[-1])
    u0 = np.asarray(v0, dtype=float) / F(x0, v0, chart)
    geo = integrate_geodesic(F, x0, u0, L, chart, tol)
    sig = np.linspace(0.0, L, n_compare)
    s_of_sigma = PchipInterpolator(sigma, s)(sig)
    xr, _, _, _, cr = ray.at(s_of_sigma)
    xg, vg, cg = geo.at(sig)
    zero = np.zeros_like(xr)
    gap = _position_gap(m, phase(m, xr, zero, cr)[0], phase(m, xg, vg, cg)[0])
    return CorrespondenceReport(
        float(gap.max()), t_err, float(ray.t[-1] - ray.t[0]), geo.length, ray.null_drift,
        geo.relative_drift, ray.energy_drift, ray.future_pointing,
    )


@dataclass
class PeriodicRayReport:
    """A t-periodic light ray over a closed Fermat geodesic."""

    period: float
    base: object
    fermat_length: float
    residuals: dict
    t0: float
    s_return: float
    ray: LightRay = field(repr=False, default=None)


def lift_closed_geodesic(st, cg, t0=0.0, tol=1e-12):
    """Lift a closed Fermat geodesic to a light ray and measure its period ``t(s*) - t0``.

    ``s*`` is the first return of the spatial track through the initial point,
    located by a root of ``<x(s) - x0, x'(0)>`` near the parameter where the
    elapsed time reaches the Fermat length.
    """
    m = st.manifold
    x0, v0, c0 = cg.initial
    L = cg.length
    tau0 = float(st.null_tau(x0, v0, c0))
    s_end = 1.5 * L / tau0
    while True:
        ray = null_geodesic(st, x0, v0, s_end, t0, c0, tol)
        if ray.t[-1] - t0 > 1.2 * L:
            break
        s_end *= 2.0
    X0, V0 = phase(m, x0, v0, c0)

    def along(s):
        x, _, xd, _, c = ray.at(np.atleast_1d(s))
        X, _ = phase(m, x, xd, c)
        return float(np.dot(m.wrap(X[0] - X0) if not m.ambient_dim else X[0] - X0, V0))

    s_guess = brentq(lambda s: float(ray.at(np.atleast_1d(s))[1][0]) - t0 - L, 0.0, ray.s[-1], xtol=1e-15)
    h = 0.05 * s_guess
    s_star = brentq(along, s_guess - h, s_guess + h, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    x, t, xd, td, c = ray.at(np.atleast_1d(s_star))
    P1 = phase(m, x[0], xd[0], int(c[0]))
    res = {
        "x": float(_position_gap(m, X0, P1[0])),
        "xdot": float(np.linalg.norm(P1[1] - V0)),
        "tdot": float(abs(td[0] - tau0)),
    }
    return PeriodicRayReport(float(t[0] - t0), cg, L, res, t0, s_star, ray)


def rays_equivalent(a, b, closure_tol=1e-8, rtol=1e-8):
    """Same spatial support and orientation and equal period; the time offset is free."""
    return classify_distinct(a.base, b.base, closure_tol) == "same" and abs(a.period - b.period) <= rtol * a.period


def t_periodic_rays(st, n_starts=256, s_max=4 * np.pi, seed=0, closure_tol=1e-8, **search):
    """t-periodic light rays over the closed Fermat geodesics found by the shooting search."""
    F = fermat_from_stationary(st.data)
    res = find_closed_geodesics(F, n_starts=n_starts, s_max=s_max, closure_tol=closure_tol, seed=seed, **search)
    reports = []
    for cg in res.geodesics:
        r = lift_closed_geodesic(st, cg)
        if not any(rays_equivalent(r, q, closure_tol) for q in reports):
            reports.append(r)
    return sorted(reports, key=lambda r: r.period), res


# --- dumps -------------------------------------------------------------------------------


def write_ray_csv(ray, path):
    """Columns: ``s, chart, x1..xn, t, constraint``."""
    n = ray.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "chart"] + [f"x{i + 1}" for i in range(n)] + ["t", "constraint"])
        for k in range(len(ray.s)):
            w.writerow([repr(float(ray.s[k])), int(ray.chart[k])] + [repr(float(a)) for a in ray.x[k]]
                       + [repr(float(ray.t[k])), repr(float(ray.constraint[k]))])


def write_geodesic_csv(path_obj, F, path):
    """Columns: ``s, chart, x1..xn, v1..vn, F``."""
    n = path_obj.x.shape[1]
    Fv = F(path_obj.x, path_obj.v, path_obj.chart)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "chart"] + [f"x{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)] + ["F"])
        for k in range(len(path_obj.s)):
            w.writerow([repr(float(path_obj.s[k])), int(path_obj.chart[k])]
                       + [repr(float(a)) for a in path_obj.x[k]] + [repr(float(a)) for a in path_obj.v[k]]
                       + [repr(float(Fv[k]))])
