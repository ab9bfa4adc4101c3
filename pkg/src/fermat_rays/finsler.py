"""Fermat, Randers and Zermelo metrics, their conversions and Finsler functionals.

Every metric here is of Randers type, ``F(x, v) = sqrt(h(v, v)) + omega(v)``.
Each presentation evaluates ``F`` through its own closed formula, and also
exposes the Randers *form* ``(h, dh, omega, domega)`` from which the
fundamental tensor and the geodesic spray are computed analytically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, DomainError, InvariantViolation
from .geometry import RiemannMetric, ScalarField, VectorField


def _lower(g, dg, V, JV):
    """``w = g V`` and ``dw[..., i, k] = d_k w_i``."""
    w = np.einsum("...ij,...j->...i", g, V)
    dw = np.einsum("...ijk,...j->...ik", dg, V) + np.einsum("...ij,...jk->...ik", g, JV)
    return w, dw


def _norm2(g, dg, V, JV):
    """``g(V, V)`` with its gradient, plus the lowered field."""
    w, dw = _lower(g, dg, V, JV)
    q = np.einsum("...i,...i->...", w, V)
    dq = np.einsum("...ijk,...i,...j->...k", dg, V, V) + 2.0 * np.einsum("...i,...ik->...k", w, JV)
    return q, dq, w, dw


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _where(x, chart, mask):
    x = np.asarray(x)
    pt = x[mask][0] if x.ndim > 1 else x
    c = np.asarray(chart)
    c = c[mask][0] if c.ndim else c
    return f"x={np.round(pt, 12).tolist()} (chart {int(c)})"


# --- data of the triad -------------------------------------------------------


@dataclass(frozen=True)
class StationaryData:
    """``(g0, beta, delta)`` of a standard stationary spacetime on ``M x R``."""

    g0: RiemannMetric
    beta: ScalarField
    delta: VectorField

    @property
    def manifold(self):
        return self.g0.manifold

    def beta_jet(self, x, chart=0):
        b, db = self.beta.jet(x, chart)
        bad = ~(b > 0)
        if np.any(bad):
            raise InvariantViolation(f"beta <= 0 at {_where(x, chart, bad)}")
        return b, db

    def validate(self, n_samples=64, seed=0, bounds=None):
        rng = np.random.default_rng(seed)
        x, c = self.manifold.sample(rng, n_samples, bounds)
        self.g0.check(x, c)
        self.beta_jet(x, c)
        return self

    def metric(self):
        return fermat_from_stationary(self)


@dataclass(frozen=True)
class RandersData:
    """Riemannian ``h`` and the one-form ``omega = h(B, .)``, stored through ``B``."""

    h: RiemannMetric
    B: VectorField

    @property
    def manifold(self):
        return self.h.manifold

    def omega_jet(self, x, chart=0):
        h, dh = self.h.jet(x, chart)
        B, JB = self.B.jet(x, chart)
        w, dw = _lower(h, dh, B, JB)
        bad = ~(np.einsum("...i,...i->...", w, B) < 1.0)
        if np.any(bad):
            raise InvariantViolation(f"|omega| >= 1 at {_where(x, chart, bad)}")
        return h, dh, w, dw

    def metric(self):
        def evaluate(x, v, chart=0):
            h, _, w, _ = self.omega_jet(x, chart)
            return np.sqrt(np.einsum("...i,...ij,...j->...", v, h, v)) + np.einsum("...i,...i->...", w, v)

        return FinslerMetric(self.manifold, evaluate, self.omega_jet, "randers")


@dataclass(frozen=True)
class ZermeloData:
    """Navigation data: Riemannian ``g`` and wind ``W`` with ``g(W, W) < 1``."""

    g: RiemannMetric
    W: VectorField

    @property
    def manifold(self):
        return self.g.manifold

    def alpha_jet(self, x, chart=0):
        """``alpha = 1 - g(W, W)`` with gradient, plus ``g``, ``dg``, ``W``, ``JW``, ``w = gW``, ``dw``."""
        g, dg = self.g.jet(x, chart)
        W, JW = self.W.jet(x, chart)
        q, dq, w, dw = _norm2(g, dg, W, JW)
        bad = ~(q < 1.0)
        if np.any(bad):
            raise InvariantViolation(f"g(W, W) >= 1 at {_where(x, chart, bad)}")
        return 1.0 - q, -dq, g, dg, W, JW, w, dw

    def alpha(self, x, chart=0):
        return self.alpha_jet(x, chart)[0]

    def metric(self):
        def evaluate(x, v, chart=0):
            a, _, g, _, _, _, w, _ = self.alpha_jet(x, chart)
            wv = np.einsum("...i,...i->...", w, v)
            gvv = np.einsum("...i,...ij,...j->...", v, g, v)
            return np.sqrt(wv**2 / a**2 + gvv / a) - wv / a

        def form(x, chart=0):
            a, da, g, dg, W, JW, w, dw = self.alpha_jet(x, chart)
            A = a[..., None, None]
            h = g / A + _outer(w, w) / A**2
            dh = (
                dg / A[..., None]
                - g[..., None] * da[..., None, None, :] / A[..., None] ** 2
                + (dw[..., :, None, :] * w[..., None, :, None] + w[..., :, None, None] * dw[..., None, :, :])
                / A[..., None] ** 2
                - 2.0 * _outer(w, w)[..., None] * da[..., None, None, :] / A[..., None] ** 3
            )
            om = -w / a[..., None]
            dom = -dw / A + w[..., :, None] * da[..., None, :] / A**2
            return h, dh, om, dom

        return FinslerMetric(self.manifold, evaluate, form, "zermelo")


class FinslerMetric:
    """A Randers-type Finsler metric.

    ``evaluate(x, v, chart)`` is the presentation's own closed formula; ``form``
    returns ``(h, dh, omega, domega)`` with the derivative axis last.
    """

    def __init__(self, manifold, evaluate, form, provenance):
        self.manifold = manifold
        self._evaluate = evaluate
        self._form = form
        self.provenance = provenance

    def __call__(self, x, v, chart=0):
        return self._evaluate(np.asarray(x, dtype=float), np.asarray(v, dtype=float), chart)

    def form(self, x, chart=0):
        return self._form(np.asarray(x, dtype=float), chart)

    def __repr__(self):
        return f"FinslerMetric({self.provenance} on {self.manifold.name})"


def fermat_from_stationary(data):
    """The Fermat metric ``(g0(delta, v) + sqrt(g0(delta, v)^2 + beta g0(v, v))) / beta``."""

    def evaluate(x, v, chart=0):
        g0, _ = data.g0.jet(x, chart)
        b, _ = data.beta_jet(x, chart)
        d, _ = data.delta.jet(x, chart)
        dv = np.einsum("...i,...ij,...j->...", d, g0, v)
        vv = np.einsum("...i,...ij,...j->...", v, g0, v)
        return dv / b + np.sqrt(dv**2 + b * vv) / b

    def form(x, chart=0):
        g0, dg0 = data.g0.jet(x, chart)
        b, db = data.beta_jet(x, chart)
        d, Jd = data.delta.jet(x, chart)
        w, dw = _lower(g0, dg0, d, Jd)
        Bt = b[..., None, None]
        num = _outer(w, w) + Bt * g0
        dnum = (
            dw[..., :, None, :] * w[..., None, :, None]
            + w[..., :, None, None] * dw[..., None, :, :]
            + g0[..., None] * db[..., None, None, :]
            + Bt[..., None] * dg0
        )
        h = num / Bt**2
        dh = dnum / Bt[..., None] ** 2 - 2.0 * num[..., None] * db[..., None, None, :] / Bt[..., None] ** 3
        om = w / b[..., None]
        dom = dw / Bt - w[..., :, None] * db[..., None, :] / Bt**2
        return h, dh, om, dom

    return FinslerMetric(data.manifold, evaluate, form, "fermat")


# --- conversions ---------------------------------------------------------------


def randers_to_zermelo(r):
    """``g = eps (h - omega omega)``, ``W = -B / eps`` with ``eps = 1 - h(B, B)``."""

    def eps_jet(x, chart):
        h, dh, w, dw = r.omega_jet(x, chart)
        B, JB = r.B.jet(x, chart)
        eps = 1.0 - np.einsum("...i,...i->...", w, B)
        deps = -(np.einsum("...ik,...i->...k", dw, B) + np.einsum("...i,...ik->...k", w, JB))
        return eps, deps, h, dh, w, dw, B, JB

    def g_jet(x, chart):
        eps, deps, h, dh, w, dw, _, _ = eps_jet(x, chart)
        E = eps[..., None, None]
        core = h - _outer(w, w)
        dcore = dh - dw[..., :, None, :] * w[..., None, :, None] - w[..., :, None, None] * dw[..., None, :, :]
        return E * core, core[..., None] * deps[..., None, None, :] + E[..., None] * dcore

    def W_jet(x, chart):
        eps, deps, _, _, _, _, B, JB = eps_jet(x, chart)
        E = eps[..., None]
        return -B / E, -JB / E[..., None] + B[..., :, None] * deps[..., None, :] / E[..., None] ** 2

    m = r.manifold
    return ZermeloData(RiemannMetric(m, g_jet, "randers->zermelo g"), VectorField(m, W_jet, "randers->zermelo W"))


def zermelo_to_randers(z):
    """``h = g / alpha + (gW)(gW) / alpha^2`` and ``B = -alpha W``."""
    zf = z.metric()

    def h_jet(x, chart):
        h, dh, _, _ = zf.form(x, chart)
        return h, dh

    def B_jet(x, chart):
        a, da, _, _, W, JW, _, _ = z.alpha_jet(x, chart)
        return -a[..., None] * W, -(W[..., :, None] * da[..., None, :] + a[..., None, None] * JW)

    m = z.manifold
    return RandersData(RiemannMetric(m, h_jet, "zermelo->randers h"), VectorField(m, B_jet, "zermelo->randers B"))


def zermelo_from_stationary(data):
    """``W = -delta`` and ``g = g0 / (beta + |delta|_0^2)``."""

    def g_jet(x, chart):
        g0, dg0 = data.g0.jet(x, chart)
        b, db = data.beta_jet(x, chart)
        d, Jd = data.delta.jet(x, chart)
        q, dq, _, _ = _norm2(g0, dg0, d, Jd)
        s = (b + q)[..., None, None]
        ds = db + dq
        return g0 / s, dg0 / s[..., None] - g0[..., None] * ds[..., None, None, :] / s[..., None] ** 2

    m = data.manifold
    return ZermeloData(RiemannMetric(m, g_jet, "stationary->zermelo g"), -data.delta)


def stationary_from_zermelo(z, gauge=None):
    """``delta = -W``, ``beta = alpha / phi``, ``g0 = g / phi`` for a positive gauge ``phi``."""
    m = z.manifold
    gauge = gauge if gauge is not None else ScalarField.constant(m, 1.0)

    def phi_jet(x, chart):
        p, dp = gauge.jet(x, chart)
        bad = ~(p > 0)
        if np.any(bad):
            raise InvariantViolation(f"gauge <= 0 at {_where(x, chart, bad)}")
        return p, dp

    def beta_jet(x, chart):
        a, da = z.alpha_jet(x, chart)[:2]
        p, dp = phi_jet(x, chart)
        return a / p, da / p[..., None] - a[..., None] * dp / p[..., None] ** 2

    def g0_jet(x, chart):
        g, dg = z.g.jet(x, chart)
        p, dp = phi_jet(x, chart)
        P = p[..., None, None]
        return g / P, dg / P[..., None] - g[..., None] * dp[..., None, None, :] / P[..., None] ** 2

    return StationaryData(
        RiemannMetric(m, g0_jet, "zermelo->stationary g0"), ScalarField(m, beta_jet, "zermelo->stationary beta"), -z.W
    )


def randers_from_stationary(data):
    return zermelo_to_randers(zermelo_from_stationary(data))


def stationary_from_randers(r, gauge=None):
    return stationary_from_zermelo(randers_to_zermelo(r), gauge)


# --- fundamental tensor and spray ----------------------------------------------


def _nonzero(v):
    v = np.asarray(v, dtype=float)
    if np.any(np.all(v == 0.0, axis=-1)):
        raise DomainError("F is not differentiable at the zero vector")
    return v


def randers_jet(form, v):
    """``F``, ``dF/dv``, the fundamental tensor and the Euler-Lagrange spray at ``(x, v)``."""
    h, dh, om, dom = form
    hv = np.einsum("...ij,...j->...i", h, v)
    a = np.sqrt(np.einsum("...i,...i->...", hv, v))
    A = a[..., None]
    ell = hv / A
    F = a + np.einsum("...i,...i->...", om, v)
    p = ell + om
    g = (F / a)[..., None, None] * (h - _outer(ell, ell)) + _outer(p, p)

    dh_vv = np.einsum("...ijk,...i,...j->...k", dh, v, v)
    Fx = dh_vv / (2.0 * A) + np.einsum("...ik,...i->...k", dom, v)
    dell = np.einsum("...ijk,...j->...ik", dh, v) / A[..., None] - ell[..., :, None] * dh_vv[..., None, :] / (
        2.0 * A[..., None] ** 2
    )
    M = p[..., :, None] * Fx[..., None, :] + F[..., None, None] * (dell + dom)
    rhs = F[..., None] * Fx - np.einsum("...ik,...k->...i", M, v)
    acc = np.linalg.solve(g, rhs[..., None])[..., 0]
    return F, p, g, acc


def fundamental_tensor(F, x, v, chart=0):
    """``g_ij(x, v) = 1/2 d^2 F^2 / dv^i dv^j``."""
    v = _nonzero(v)
    return randers_jet(F.form(x, chart), v)[2]


# --- functionals ---------------------------------------------------------------


@dataclass
class SampledCurve:
    """A curve sampled at parameters ``s`` with optional exact velocities."""

    s: np.ndarray
    x: np.ndarray
    v: np.ndarray | None = None
    chart: object = 0

    def velocities(self):
        if self.v is not None:
            return np.asarray(self.v, dtype=float)
        return CubicSpline(self.s, self.x, axis=0)(self.s, 1)


def _integrand(F, curve, power):
    s = np.asarray(curve.s, dtype=float)
    if len(s) < 2:
        raise DomainError("a sampled curve needs at least 2 samples")
    vals = F(curve.x, curve.velocities(), curve.chart) ** power
    return s, vals


def finsler_length(F, curve):
    s, f = _integrand(F, curve, 1)
    return float(integrate.simpson(f, x=s)) if len(s) > 2 else float(integrate.trapezoid(f, s))


def finsler_energy(F, curve):
    s, f = _integrand(F, curve, 2)
    return float(integrate.simpson(f, x=s)) if len(s) > 2 else float(integrate.trapezoid(f, s))


def quadrature_error(F, curve):
    """Composite-rule error estimate: Simpson minus trapezoid on the same samples."""
    s, f = _integrand(F, curve, 1)
    return abs(float(integrate.simpson(f, x=s)) - float(integrate.trapezoid(f, s)))


def cumulative_length(F, curve):
    """Running Fermat/Finsler length along the samples (starts at 0)."""
    s, f = _integrand(F, curve, 1)
    if len(s) > 2:
        return integrate.cumulative_simpson(f, x=s, initial=0.0)
    return integrate.cumulative_trapezoid(f, s, initial=0.0)


@dataclass(frozen=True)
class ComparabilityEstimate:
    c1: float
    c2: float
    sample_count: int
    validation_count: int
    violations: int


def _box_bounds(manifold, chart, bounds):
    if bounds is not None:
        return [tuple(b) for b in np.asarray(bounds, dtype=float)]
    c = manifold.charts[chart]
    if np.all(np.isfinite(c.lo)):
        return list(zip(c.lo * 0.999, c.hi * 0.999))
    return None


def comparability_constants(F, h, n_samples=10000, seed=0, bounds=None, n_validate=10000):
    """Envelope ``c1 h(v, v) <= F^2(x, v) <= c2 h(v, v)`` from sampling plus local polishing."""
    m = F.manifold
    if not m.compact and bounds is None:
        raise ConfigurationError(f"{m.name} is not compact: declare sampling bounds")
    rng = np.random.default_rng(seed)

    def draw(k):
        x, c = m.sample(rng, k, bounds)
        z = rng.standard_normal((k, m.dim))
        hz = np.einsum("...i,...ij,...j->...", z, h(x, c), z)
        v = z / np.sqrt(hz)[:, None]
        return x, c, v, F(x, v, c) ** 2

    x, c, v, r = draw(n_samples)
    extremes = []
    for sign, i in ((1.0, np.argmin(r)), (-1.0, np.argmax(r))):
        chart = int(c[i])
        n = m.dim

        def obj(p, chart=chart, sign=sign):
            xx, vv = p[:n], p[n:]
            return sign * F(xx, vv, chart) ** 2 / np.einsum("i,ij,j->", vv, h(xx, chart), vv)

        box = _box_bounds(m, chart, bounds)
        bnds = None if box is None else box + [(None, None)] * n
        res = optimize.minimize(obj, np.concatenate([x[i], v[i]]), method="L-BFGS-B", bounds=bnds,
                                options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500})
        extremes.append(sign * res.fun)
    c1 = float(min(r.min(), extremes[0]))
    c2 = float(max(r.max(), extremes[1]))
    _, _, _, rv = draw(n_validate)
    slack = 1e-12
    violations = int(np.sum((rv < c1 * (1 - slack)) | (rv > c2 * (1 + slack))))
    return ComparabilityEstimate(c1, c2, n_samples, n_validate, violations)


# --- co-Randers duality ----------------------------------------------------------


def co_randers_eval(g, W, x, xi, chart=0):
    """``H(x, xi) = sqrt(g*(xi, xi)) + xi(W)`` with ``g*`` the dual of the Riemannian metric ``g``."""
    G = g(x, chart)
    Wx = W(x, chart)
    xi = np.asarray(xi, dtype=float)
    gstar = np.linalg.inv(G)
    return np.sqrt(np.einsum("...i,...ij,...j->...", xi, gstar, xi)) + np.einsum("...i,...i->...", xi, Wx)


def legendre_image(F, x, v, chart=0):
    """``xi = 1/2 d_v F^2 = g_(x,v)(v, .)``."""
    v = _nonzero(v)
    g = fundamental_tensor(F, x, v, chart)
    return np.einsum("...ij,...j->...i", g, v)


def legendre_check(z, x, v, chart=0):
    """``|H(x, xi) - 1|`` for the Legendre image of ``v`` rescaled to ``F(x, v) = 1``."""
    v = _nonzero(v)
    F = z.metric()
    u = v / F(x, v, chart)[..., None]
    xi = legendre_image(F, x, u, chart)
    return np.abs(co_randers_eval(z.g, z.W, x, xi, chart) - 1.0)


# --- reversibility and the period bound ----------------------------------------


def reversibility_from_phi(phi):
    """``(phi + sqrt(1 + phi^2)) / (-phi + sqrt(1 + phi^2))``, evaluated without cancellation."""
    r = np.sqrt(1.0 + np.asarray(phi, dtype=float) ** 2)
    return (phi + r) ** 2


def period_bound_from_phi(phi):
    r = np.sqrt(1.0 + np.asarray(phi, dtype=float) ** 2)
    return 2.0 * np.pi * r / (phi + r)


@dataclass(frozen=True)
class ReversibilityReport:
    lambda_: float
    phi: float
    witness_point: np.ndarray
    witness_chart: int
    numeric_lambda: float
    direction: np.ndarray
    grid_phi: float

    @property
    def grid_gap(self):
        return self.phi - self.grid_phi


def indicatrix_maximum(F, x, chart=0, n_starts=16, seed=0):
    """Maximise ``F(x, -v)`` over ``F(x, v) = 1``; returns ``(value, v)``.

    The ratio ``F(-y) / F(y)`` is scale invariant, so directions are searched
    unconstrained and mapped to the indicatrix afterwards.
    """
    h, _, om, _ = F.form(np.asarray(x, dtype=float), chart)

    def Fp(y):
        hy = h @ y
        a = np.sqrt(y @ hy)
        return a + om @ y, hy / a + om

    def neg_ratio(y):
        f1, p1 = Fp(y)
        f2, p2 = Fp(-y)
        return -f2 / f1, (p2 * f1 + f2 * p1) / f1**2

    n = len(om)
    rng = np.random.default_rng(seed)
    starts = [-np.linalg.solve(h, om) if np.any(om) else np.eye(n)[0]]
    if n == 1:
        starts += [np.array([1.0]), np.array([-1.0])]
    else:
        starts += list(rng.standard_normal((n_starts, n)))
    best = None
    for y0 in starts:
        if n == 1:
            val, y = -neg_ratio(y0)[0], y0
        else:
            res = optimize.minimize(neg_ratio, y0, jac=True, method="BFGS", options={"gtol": 1e-13, "maxiter": 400})
            val, y = -res.fun, res.x
        if best is None or val > best[0]:
            best = (val, y)
    val, y = best
    return float(val), y / Fp(y)[0]


def _lambda_sq(data, x, chart):
    g0, dg0 = data.g0.jet(x, chart)
    b, db = data.beta_jet(x, chart)
    d, Jd = data.delta.jet(x, chart)
    q, dq, _, _ = _norm2(g0, dg0, d, Jd)
    return q / b, dq / b[..., None] - q[..., None] * db / b[..., None] ** 2


def reversibility(data, resolution=64, bounds=None, nearby=1e-3):
    """Reversibility of the Fermat metric: grid + polish for ``phi``, closed form and numeric ``lambda``."""
    m = data.manifold
    best = (-np.inf, None, None)
    for chart, pts in m.grid(resolution, bounds):
        L2, _ = _lambda_sq(data, pts, chart)
        if not np.all(np.isfinite(L2)):
            raise InvariantViolation("|delta|_0 / sqrt(beta) is unbounded on the grid")
        i = int(np.argmax(L2))
        if L2[i] > best[0]:
            best = (float(L2[i]), pts[i].copy(), chart)
    grid_L2, x0, chart = best

    def obj(x):
        L2, dL2 = _lambda_sq(data, x, chart)
        return -float(L2), -dL2

    res = optimize.minimize(obj, x0, jac=True, method="L-BFGS-B", bounds=_box_bounds(m, chart, bounds),
                            options={"ftol": 1e-16, "gtol": 1e-14, "maxiter": 1000})
    if -res.fun >= grid_L2:
        witness, L2 = res.x, -res.fun
    else:
        witness, L2 = x0, grid_L2
    phi = float(np.sqrt(L2))
    lam = float(reversibility_from_phi(phi))

    F = fermat_from_stationary(data)
    # nearby probes stay inside the declared domain
    box = None if bounds is None else np.asarray(bounds, dtype=float)
    num, direction = indicatrix_maximum(F, witness, chart)
    for k in range(m.dim):
        for sgn in (1.0, -1.0):
            xk = witness.copy()
            xk[k] += sgn * nearby
            if m.inside(xk, chart) and (box is None or all(lo <= a <= hi for a, (lo, hi) in zip(xk, box))):
                num = max(num, indicatrix_maximum(F, xk, chart)[0])
    return ReversibilityReport(lam, phi, witness, chart, float(num), direction, float(np.sqrt(grid_L2)))


def period_lower_bound(data, resolution=64, bounds=None):
    """Minimal period of a t-periodic light ray under the (caller-asserted) flag-curvature pinching."""
    if isinstance(data, ReversibilityReport):
        phi = data.phi
    else:
        phi = reversibility(data, resolution, bounds).phi
    return float(period_bound_from_phi(phi))
