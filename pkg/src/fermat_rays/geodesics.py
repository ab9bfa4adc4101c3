"""Finsler geodesics: integration, the Robles construction, closed-geodesic search, Katok examples."""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import ConfigurationError, DegeneracyError, DomainError, EscapeError, InvariantViolation
from .finsler import SampledCurve, ZermeloData, randers_jet, stationary_from_zermelo
from .geometry import christoffel, round_metric, rotation_field, sphere
from .integrate import integrate_batch

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def workers():
    """Worker count: ``FERMAT_RAYS_THREADS`` caps the default of ``min(4, cpu_count)``."""
    default = min(4, os.cpu_count() or 1)
    env = os.environ.get("FERMAT_RAYS_THREADS")
    if env:
        try:
            return max(1, min(default, int(env)))
        except ValueError:
            raise ConfigurationError(f"FERMAT_RAYS_THREADS must be an integer, got {env!r}") from None
    return default


def run_chunked(fn, y0, chart, s_end, **kw):
    """``integrate_batch`` split into contiguous chunks over worker threads; order is preserved."""
    y0 = np.atleast_2d(y0)
    N = len(y0)
    chart = np.broadcast_to(np.asarray(chart, dtype=int), (N,))
    s_end = np.broadcast_to(np.asarray(s_end, dtype=float), (N,))
    k = min(workers(), max(1, N // 64))
    if k == 1:
        return fn(y0, chart, s_end, **kw)
    parts = np.array_split(np.arange(N), k)
    with ThreadPoolExecutor(k) as ex:
        out = ex.map(lambda p: fn(y0[p], chart[p], s_end[p], **kw), parts)
    return [t for chunk in out for t in chunk]


# --- spray and integration ------------------------------------------------------


def geodesic_spray(F, x, v, chart=0):
    """Geodesic acceleration of the affinely parametrized energy Euler-Lagrange equations."""
    v = np.asarray(v, dtype=float)
    if np.any(np.all(v == 0.0, axis=-1)):
        raise DomainError("the geodesic spray is undefined at the zero vector")
    _, _, g, acc = randers_jet(F.form(x, chart), v)
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise DegeneracyError("fundamental tensor is not positive definite") from None
    return acc


def spray_rhs(F):
    n = F.manifold.dim

    def rhs(y, c):
        x, v = y[:, :n], y[:, n:]
        return np.concatenate([v, randers_jet(F.form(x, c), v)[3]], axis=1)

    return rhs


@dataclass
class GeodesicPath:
    """Samples ``(s, x, v, chart)`` of a geodesic, with dense evaluation when a trajectory is attached."""

    manifold: object
    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    chart: np.ndarray
    parametrization: str
    F0: float
    F_drift: float
    length: float
    trajectory: object = None

    @property
    def relative_drift(self):
        return self.F_drift / self.F0

    @property
    def s_max(self):
        return float(self.s[-1])

    def at(self, s):
        """``(x, v, chart)`` at parameter(s) ``s`` from the dense output."""
        if self.trajectory is None:
            raise ConfigurationError("this path carries samples only")
        y, c = self.trajectory.at(s)
        n = self.manifold.dim
        return y[..., :n], y[..., n:], c

    def curve(self, n_samples=None):
        """A :class:`SampledCurve` on the step nodes or on a uniform grid."""
        if n_samples is None:
            return SampledCurve(self.s, self.x, self.v, self.chart)
        s = np.linspace(self.s[0], self.s[-1], n_samples)
        x, v, c = self.at(s)
        return SampledCurve(s, x, v, c)


def _path(F, s, x, v, c, traj=None, parametrization="affine"):
    Fv = F(x, v, c)
    F0 = float(Fv[0])
    drift = float(np.max(np.abs(Fv - F0)))
    return GeodesicPath(F.manifold, s, x, v, np.asarray(c, dtype=int), parametrization, F0, drift,
                        F0 * float(s[-1] - s[0]), traj)


def integrate_geodesics(F, x0, v0, s_max, chart=0, tol=1e-10, dense=True):
    """Batched affine geodesics from ``(x0[i], v0[i])``; one :class:`GeodesicPath` each."""
    m = F.manifold
    n = m.dim
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    if np.any(np.all(v0 == 0.0, axis=-1)):
        raise DomainError("initial velocity must be nonzero")
    chart = np.broadcast_to(np.asarray(chart, dtype=int), (len(x0),))
    for c in np.unique(chart):
        m.check_point(x0[chart == c], int(c))
    y0 = np.concatenate([x0, v0], axis=1)
    trajs = run_chunked(
        lambda y, c, s: integrate_batch(spray_rhs(F), m, y, c, s, rtol=tol, atol=tol * 1e-2,
                                        vectors=(slice(n, 2 * n),), dense=dense),
        y0, chart, s_max,
    )
    out = []
    for tr in trajs:
        if tr.escaped:
            raise EscapeError(f"geodesic left the atlas at s={tr.exit_time:.6g}", tr.exit_time)
        s, y, c = tr.nodes()
        out.append(_path(F, s, y[:, :n], y[:, n:], c, tr))
    return out


def integrate_geodesic(F, x0, v0, s_max, chart=0, tol=1e-10, dense=True):
    return integrate_geodesics(F, [x0], [v0], s_max, [chart], tol, dense)[0]


# --- Robles construction -------------------------------------------------------


@dataclass(frozen=True)
class HomothetyData:
    sigma: float
    validity_residual: float

    @property
    def valid(self):
        return self.validity_residual < 1e-8


def lie_derivative_metric(g, W, x, chart=0):
    """``(L_W g)_ij = W^k d_k g_ij + g_kj d_i W^k + g_ik d_j W^k``."""
    G, dG = g.jet(x, chart)
    V, J = W.jet(x, chart)
    gJ = np.einsum("...ik,...kj->...ij", G, J)
    return np.einsum("...ijk,...k->...ij", dG, V) + gJ + np.swapaxes(gJ, -1, -2), G


def homothety(g, W, n_samples=256, seed=0, bounds=None):
    """Least-squares ``sigma`` in ``L_W g = sigma g`` over sampled points, with the sup residual."""
    rng = np.random.default_rng(seed)
    x, c = g.manifold.sample(rng, n_samples, bounds)
    L, G = lie_derivative_metric(g, W, x, c)
    sigma = float(np.sum(L * G) / np.sum(G * G))
    return HomothetyData(sigma, float(np.max(np.abs(L - sigma * G))))


def _tau(t, sigma):
    """``(2 / sigma)(1 - exp(-sigma t / 2))``; expm1 keeps it exact as ``sigma -> 0``."""
    t = np.asarray(t, dtype=float)
    if sigma == 0:
        return t
    return -(2.0 / sigma) * np.expm1(-sigma * t / 2.0)


def robles_geodesic(z, hom, x0, v0, t_max, chart=0, n_samples=257, tol=1e-12):
    """Unit-speed Zermelo geodesic as ``P(t) = phi_t(rho(t))``.

    ``phi`` is the flow of the wind and ``rho`` the ``g``-geodesic with
    ``rho'(0) = P'(0) - W``, reparametrized so that ``g(rho', rho') = exp(-sigma t)``.
    Only Christoffel symbols of ``g`` and the flow of ``W`` are used, never the
    Finsler spray.
    """
    if not hom.valid:
        raise InvariantViolation(
            f"W is not an infinitesimal homothety: residual {hom.validity_residual:.3g} >= 1e-8"
        )
    m = z.manifold
    n = m.dim
    Z = z.metric()
    x0 = np.asarray(x0, dtype=float)
    m.check_point(x0, chart)
    v0 = np.asarray(v0, dtype=float) / Z(x0, v0, chart)
    u0 = v0 - z.W(x0, chart)

    def g_rhs(y, c):
        x, v = y[:, :n], y[:, n:]
        Gam = christoffel(z.g, x, c)
        return np.concatenate([v, -np.einsum("...kij,...i,...j->...k", Gam, v, v)], axis=1)

    tau_max = float(_tau(t_max, hom.sigma))
    rho = integrate_batch(g_rhs, m, np.concatenate([x0, u0])[None], [chart], tau_max, rtol=tol,
                          atol=tol, vectors=(slice(n, 2 * n),), dense=True)[0]
    if rho.escaped:
        raise EscapeError(f"g-geodesic left the atlas at tau={rho.exit_time:.6g}", rho.exit_time)
    t = np.linspace(0.0, t_max, n_samples)
    y, c = rho.at(_tau(t, hom.sigma))
    y[:, n:] *= np.exp(-hom.sigma * t / 2.0)[:, None]

    def w_rhs(y, c):
        V, J = z.W.jet(y[:, :n], c)
        return np.concatenate([V, np.einsum("...ik,...k->...i", J, y[:, n:])], axis=1)

    flows = integrate_batch(w_rhs, m, y, c, t, rtol=tol, atol=tol, vectors=(slice(n, 2 * n),))
    P = np.array([f.y_end[:n] for f in flows])
    xi = np.array([f.y_end[n:] for f in flows])
    cP = np.array([f.chart_end for f in flows])
    if any(f.escaped for f in flows):
        raise EscapeError("wind flow left the atlas")
    return _path(Z, t, P, xi + z.W(P, cP), cP, parametrization="g-rescaled")


# --- closed geodesics ------------------------------------------------------------


def phase(manifold, x, v, chart):
    """Phase-space representative: embedding coordinates on spheres, chart coordinates otherwise."""
    if manifold.ambient_dim:
        return manifold.to_ambient(x, chart), manifold.ambient_tangent(x, v, chart)
    return np.asarray(x, dtype=float), np.asarray(v, dtype=float)


def phase_gap(manifold, a, b):
    """Vector ``b - a`` of two phase representatives, positions minimum-imaged on periodic axes."""
    dx = b[0] - a[0]
    if not manifold.ambient_dim:
        dx = manifold.wrap(dx)
    return np.concatenate([dx, b[1] - a[1]], axis=-1)


@dataclass
class ClosedGeodesic:
    """A closed affine geodesic of period ``T``; ``length = F0 T``."""

    path: GeodesicPath
    length: float
    multiplicity_guess: int = 1
    residual: float = np.nan
    metric: object = field(default=None, repr=False)

    @property
    def period(self):
        return self.path.s_max

    @property
    def initial(self):
        return self.path.x[0], self.path.v[0], int(self.path.chart[0])

    def closure_residual(self):
        """``|x(T) - x(0)| + |v(T) - v(0)|`` in phase coordinates."""
        m = self.path.manifold
        a = phase(m, self.path.x[0], self.path.v[0], self.path.chart[0])
        b = phase(m, self.path.x[-1], self.path.v[-1], self.path.chart[-1])
        d = phase_gap(m, a, b)
        n = len(a[0])
        return float(np.linalg.norm(d[:n]) + np.linalg.norm(d[n:]))

    def reintegrate(self, tol=1e-12, periods=1.0, shift=0.0):
        x0, v0, c0 = self.initial
        if shift:
            x, v, c = self.path.at(shift % self.period)
            x0, v0, c0 = x, v, int(c)
        return integrate_geodesic(self.metric, x0, v0, periods * self.period, c0, tol)

    def iterate(self, m):
        """The ``m``-fold cover, traversed as one closed geodesic of period ``m T``."""
        p = self.reintegrate(periods=float(m))
        return ClosedGeodesic(p, m * self.length, m * self.multiplicity_guess, self.residual, self.metric)

    def shifted(self, ds):
        """The same geodesic started at parameter ``ds``."""
        p = self.reintegrate(shift=ds)
        return ClosedGeodesic(p, self.length, self.multiplicity_guess, self.residual, self.metric)


def _quasi_random_starts(F, n_starts, seed):
    m = F.manifold
    d = m.dim
    k = (m.ambient_dim or d) + d
    u = np.clip(qmc.Halton(d=k, scramble=True, seed=seed).random(n_starts), 1e-12, 1 - 1e-12)
    if m.ambient_dim:
        X = ndtri(u[:, : m.ambient_dim])
        x, c = m.from_ambient(X / np.linalg.norm(X, axis=1, keepdims=True))
    elif m.periods is not None and np.all(np.isfinite(m.periods)):
        x, c = u[:, :d] * m.periods, np.zeros(n_starts, dtype=int)
    else:
        raise ConfigurationError(f"closed-geodesic search needs a compact manifold, got {m.name}")
    z = ndtri(u[:, -d:])
    return x, z / F(x, z, c)[:, None], c


def _golden_min(fn, a, b, iters=48):
    """Vectorised golden-section minimisation of ``fn`` on brackets ``[a, b]``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        left = fc < fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        new = np.where(left, b - GOLDEN * (b - a), a + GOLDEN * (b - a))
        fnew = fn(new)
        c, d = np.where(left, new, d), np.where(left, c, new)
        fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
    s = 0.5 * (a + b)
    return s, fn(s)


def _near_returns(m, tr, P0, s_max, ds, s_min, cutoff):
    """Refined local minima of the phase gap to the start along one trajectory."""
    grid = np.linspace(0.0, s_max, max(8, int(np.ceil(s_max / ds)) + 1))
    n = m.dim

    def gap(s):
        y, c = tr.at(s)
        return np.linalg.norm(phase_gap(m, P0, phase(m, y[:, :n], y[:, n:], c)), axis=-1)

    g = gap(grid)
    j = np.nonzero((g[1:-1] < g[:-2]) & (g[1:-1] <= g[2:]) & (g[1:-1] < cutoff) & (grid[1:-1] > s_min))[0] + 1
    if not len(j):
        return np.empty(0), np.empty(0)
    return _golden_min(gap, grid[j - 1], grid[j + 1])


@dataclass
class SearchResult:
    geodesics: list
    continuum_suspected: bool
    diagnostics: dict

    def __len__(self):
        return len(self.geodesics)

    def __iter__(self):
        return iter(self.geodesics)

    @property
    def lengths(self):
        return sorted(g.length for g in self.geodesics)


def _residuals(F, z, chart, tol):
    """Return-map residual ``(X(T) - X0, V(T) - V0, F(x0, v0) - 1)`` for unknowns ``z = (x0, v0, T)``."""
    m = F.manifold
    n = m.dim
    T = z[:, -1]
    ok = T > 0
    y0 = z[:, : 2 * n]
    trajs = run_chunked(
        lambda y, c, s: integrate_batch(spray_rhs(F), m, y, c, s, rtol=tol, atol=tol * 1e-2,
                                        vectors=(slice(n, 2 * n),), strict=False),
        y0, chart, np.where(ok, T, 0.0),
    )
    yT = np.array([t.y_end for t in trajs])
    cT = np.array([t.chart_end for t in trajs])
    bad = np.array([t.failed or t.escaped for t in trajs]) | ~ok
    with np.errstate(all="ignore"):
        r = np.concatenate(
            [
                phase_gap(m, phase(m, y0[:, :n], y0[:, n:], chart), phase(m, yT[:, :n], yT[:, n:], cT)),
                (F(y0[:, :n], y0[:, n:], chart) - 1.0)[:, None],
            ],
            axis=1,
        )
    r[bad] = np.nan
    return r


def polish_closed(F, x0, v0, T, chart, tol=1e-12, fd_step=1e-7, max_iter=30, target=1e-11):
    """Batched Levenberg-Marquardt on the return map.

    Returns ``(x, v, T, chart, residual_norm)``; a failed candidate has an
    infinite residual.
    """
    m = F.manifold
    n = m.dim
    z = np.concatenate([np.atleast_2d(x0), np.atleast_2d(v0), np.atleast_1d(T)[:, None]], axis=1).astype(float)
    chart = np.array(chart, dtype=int, ndmin=1).copy()
    K, p = z.shape
    best_z, best_c = z.copy(), chart.copy()
    best_r = np.full(K, np.inf)
    Jac = None
    res_best = None
    mu = np.full(K, 1e-10)
    active = np.ones(K, dtype=bool)
    stall = np.zeros(K, dtype=int)

    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if not len(idx):
            break
        za, ca = z[idx], chart[idx]
        h = fd_step * np.maximum(1.0, np.abs(za))
        Z = np.concatenate([za[:, None, :], za[:, None, :] + h[:, :, None] * np.eye(p)[None]], axis=1)
        R = _residuals(F, Z.reshape(-1, p), np.repeat(ca, p + 1), tol).reshape(len(idx), p + 1, -1)
        r0 = R[:, 0]
        J = np.swapaxes((R[:, 1:] - r0[:, None]) / h[:, :, None], 1, 2)
        norm = np.linalg.norm(r0, axis=1)
        if Jac is None:
            Jac = np.zeros((K,) + J.shape[1:])
            res_best = np.zeros((K, J.shape[1]))
        improved = np.isfinite(norm) & np.all(np.isfinite(J), axis=(1, 2)) & (norm < best_r[idx])
        for k, i in enumerate(idx):
            if improved[k]:
                stall[i] = stall[i] + 1 if norm[k] > 0.5 * best_r[i] else 0
                best_r[i], best_z[i], best_c[i] = norm[k], za[k], ca[k]
                Jac[i], res_best[i] = J[k], r0[k]
                mu[i] = max(mu[i] / 10.0, 1e-14)
            else:
                stall[i] += 1
                mu[i] *= 100.0
        done = (best_r[idx] < target) | (stall[idx] >= 4) | (mu[idx] > 1e4) | ~np.isfinite(best_r[idx])
        active[idx[done]] = False
        idx = idx[~done]
        if not len(idx):
            break
        A = Jac[idx]
        AtA = np.einsum("kri,krj->kij", A, A)
        diag = np.einsum("kii->ki", AtA).max(axis=1)
        lhs = AtA + (mu[idx] * diag)[:, None, None] * np.eye(p)
        dz = -np.linalg.solve(lhs, np.einsum("kri,kr->ki", A, res_best[idx])[..., None])[..., 0]
        # keep each step local
        scale = np.minimum(1.0, 0.2 / np.maximum(np.linalg.norm(dz[:, :n], axis=1), 1e-300))
        znew = best_z[idx] + scale[:, None] * dz
        new_c, new_x, Jt, _ = m.handoff(znew[:, :n], best_c[idx])
        znew[:, n : 2 * n] = np.einsum("kij,kj->ki", Jt, znew[:, n : 2 * n])
        znew[:, :n] = new_x
        z[idx], chart[idx] = znew, new_c
    return best_z[:, :n], best_z[:, n : 2 * n], best_z[:, -1], best_c, best_r


def detect_multiplicity(cg, max_m=12, tol=1e-6):
    """Largest ``m <= max_m`` such that the path already closes at ``T / m``."""
    m = cg.path.manifold
    x0, v0, c0 = cg.initial
    P0 = phase(m, x0, v0, c0)
    best = 1
    for k in range(2, max_m + 1):
        x, v, c = cg.path.at(cg.period / k)
        if np.linalg.norm(phase_gap(m, P0, phase(m, x, v, c))) < tol:
            best = k
    return best


def _position_gap(m, A, B):
    d = B - A
    return np.linalg.norm(d if m.ambient_dim else m.wrap(d), axis=-1)


def _support_distance(a, b, n_samples=512):
    """One-sided distances from dense samples of ``a`` to the curve ``b`` plus tangent alignment."""
    m = a.path.manifold
    sa = np.linspace(0.0, a.period, n_samples, endpoint=False)
    xa, va, ca = a.path.at(sa)
    Pa = phase(m, xa, va, ca)
    sb = np.linspace(0.0, b.period, n_samples + 1)
    xb, vb, cb = b.path.at(sb)
    Pb = phase(m, xb, vb, cb)
    D = _position_gap(m, Pa[0][:, None], Pb[0][None])
    j = np.argmin(D, axis=1)
    step = b.period / n_samples

    def dist(s):
        x, v, c = b.path.at(np.mod(s, b.period))
        return _position_gap(m, Pa[0], phase(m, x, v, c)[0])

    # symmetric brackets, wrapped through the seam s = 0 = T
    s_star, d = _golden_min(dist, sb[j] - step, sb[j] + step)
    x, v, c = b.path.at(np.mod(s_star, b.period))
    tb = phase(m, x, v, c)[1]
    ta = Pa[1]
    align = np.einsum("ij,ij->i", ta, tb) / (np.linalg.norm(ta, axis=1) * np.linalg.norm(tb, axis=1))
    return d, align


def classify_distinct(a, b, closure_tol=1e-8, length_rtol=1e-6):
    """``"same"``, ``"iterate"`` or ``"distinct"`` for two closed geodesics.

    Supports are compared by a dense point-to-curve Hausdorff distance with
    threshold ``10 * closure_tol``.  Opposite orientations of one support are
    distinct closed geodesics.
    """
    thr = 10.0 * closure_tol
    dab, al_ab = _support_distance(a, b)
    dba, al_ba = _support_distance(b, a)
    in_b, in_a = dab.max() < thr, dba.max() < thr
    if not (in_b or in_a):
        return "distinct"
    if np.median(al_ab if in_b else al_ba) < 0:
        return "distinct"
    r = a.length / b.length
    if abs(r - 1.0) < length_rtol and in_a and in_b:
        return "same"
    q = max(r, 1.0 / r)
    if round(q) >= 2 and abs(q - round(q)) < length_rtol * q:
        return "iterate"
    return "distinct"


def find_closed_geodesics(F, n_starts=256, s_max=4 * np.pi, closure_tol=1e-8, seed=0, coarse_tol=1e-9,
                          tol=1e-12, max_candidates=64, per_bucket=4, max_multiplicity=12,
                          return_cutoff=0.3, ds=0.02):
    """Shooting search for closed geodesics of ``F`` on a compact manifold.

    Starts are quasi-random points of the unit sphere bundle; near-returns in
    phase space seed a Levenberg-Marquardt polish of the return map in
    ``(x0, v0, T)``; iterates are reduced to prime geodesics and duplicates
    removed with :func:`classify_distinct`.
    """
    t_start = time.perf_counter()
    m = F.manifold
    if not m.compact:
        raise ConfigurationError(f"closed-geodesic search needs a compact manifold, got {m.name}")
    n = m.dim
    x0, v0, c0 = _quasi_random_starts(F, n_starts, seed)
    trajs = run_chunked(
        lambda y, c, s: integrate_batch(spray_rhs(F), m, y, c, s, rtol=coarse_tol, atol=coarse_tol * 1e-2,
                                        vectors=(slice(n, 2 * n),), dense=True, strict=False),
        np.concatenate([x0, v0], axis=1), c0, s_max,
    )
    P0 = phase(m, x0, v0, c0)
    cands, first_close = [], []
    for i, tr in enumerate(trajs):
        if tr.failed:
            continue
        s_star, g = _near_returns(m, tr, (P0[0][i], P0[1][i]), tr.s_end, ds, 0.05 * s_max / 4, return_cutoff)
        for s, d in zip(s_star, g):
            cands.append((d, i, s))
        hit = s_star[g < 1e-6]
        first_close.append(hit.min() if len(hit) else np.nan)
    first_close = np.array(first_close)
    closed = first_close[np.isfinite(first_close)]
    continuum = False
    if len(closed) > 0.5 * n_starts:
        med = np.median(closed)
        continuum = np.sum(np.abs(closed - med) < 1e-6 * med) > 0.5 * n_starts

    # distinct return lengths first, best gaps within each length bucket
    cands.sort()
    buckets, chosen = [], []
    cap = 8 if continuum else max_candidates
    for d, i, s in cands:
        b = next((b for b in buckets if abs(s - b[0]) < 0.01 * b[0]), None)
        if b is None:
            b = [s, 0]
            buckets.append(b)
        if b[1] < per_bucket:
            b[1] += 1
            chosen.append((i, s))
        if len(chosen) >= cap:
            break

    geos, multiplicities = [], []
    n_fail = 0
    if chosen:
        ii = np.array([c[0] for c in chosen])
        T0 = np.array([c[1] for c in chosen])
        x, v, T, c, r = polish_closed(F, x0[ii], v0[ii], T0, c0[ii], tol=tol, target=closure_tol * 1e-3)
        good = r < closure_tol
        n_fail += int(np.sum(~good))
        paths = integrate_geodesics(F, x[good], v[good], T[good], c[good], tol) if good.any() else []
        prime = []
        for p, res in zip(paths, r[good]):
            cg = ClosedGeodesic(p, p.length, 1, float(res), F)
            k = detect_multiplicity(cg, max_multiplicity)
            multiplicities.append(k)
            prime.append((cg, k))
        # re-polish reduced periods
        red = [(cg, k) for cg, k in prime if k > 1]
        keep = [cg for cg, k in prime if k == 1]
        if red:
            xs = np.array([cg.initial[0] for cg, _ in red])
            vs = np.array([cg.initial[1] for cg, _ in red])
            cs = np.array([cg.initial[2] for cg, _ in red])
            Ts = np.array([cg.period / k for cg, k in red])
            x, v, T, c, r = polish_closed(F, xs, vs, Ts, cs, tol=tol, target=closure_tol * 1e-3)
            good = r < closure_tol
            n_fail += int(np.sum(~good))
            if good.any():
                for p, res in zip(integrate_geodesics(F, x[good], v[good], T[good], c[good], tol), r[good]):
                    keep.append(ClosedGeodesic(p, p.length, 1, float(res), F))
        for cg in sorted(keep, key=lambda g: (g.residual, g.length)):
            verdicts = [classify_distinct(cg, u, closure_tol) for u in geos]
            if "same" in verdicts:
                continue
            if "iterate" in verdicts:
                j = verdicts.index("iterate")
                if cg.length < geos[j].length:
                    geos[j] = cg
                continue
            geos.append(cg)
    geos.sort(key=lambda g: g.length)
    diag = {
        "n_starts": n_starts,
        "n_failed_starts": int(sum(t.failed for t in trajs)),
        "n_candidates": len(chosen),
        "n_polish_failures": n_fail,
        "closed_fraction": float(len(closed) / n_starts),
        "multiplicities": multiplicities,
        "runtime_s": time.perf_counter() - t_start,
    }
    return SearchResult(geos, bool(continuum), diag)


# --- Katok examples ------------------------------------------------------------------


def katok_data(alpha, dim=2):
    """Round ``S^2`` with wind ``alpha`` times the polar rotation field."""
    if dim != 2:
        raise ConfigurationError("only the S^2 Katok example is built in")
    if not 0 <= alpha:
        raise InvariantViolation(f"alpha must be nonnegative, got {alpha}")
    S = sphere(2)
    z = ZermeloData(round_metric(S), rotation_field(S).scaled(float(alpha)))
    # the wind is longest on the equator, where |V| = 1
    z.alpha(np.array([[1.0, 0.0]]), 0)
    return z


def katok_stationary(alpha, dim=2):
    return stationary_from_zermelo(katok_data(alpha, dim))


@dataclass
class KatokReport:
    alpha: float
    count: int
    lengths: list
    expected_count: int
    expected_lengths: list
    relative_errors: list
    bound: float
    continuum_suspected: bool
    runtime_s: float
    search: SearchResult = field(repr=False, default=None)

    def as_dict(self):
        out = {k: getattr(self, k) for k in ("alpha", "count", "lengths", "expected_count", "expected_lengths",
                                             "relative_errors", "bound", "continuum_suspected")}
        out["initial_conditions"] = [
            {"x": g.initial[0].tolist(), "v": g.initial[1].tolist(), "chart": g.initial[2], "residual": g.residual}
            for g in self.search.geodesics
        ]
        return out


def katok_experiment(alpha, n_starts=500, s_max=None, seed=0, closure_tol=1e-8, dim=2):
    """Closed-geodesic census of the Katok metric; irrational ``alpha`` should give exactly two."""
    from .finsler import period_bound_from_phi

    t0 = time.perf_counter()
    z = katok_data(alpha, dim)
    if s_max is None:
        s_max = max(4 * np.pi, 1.2 * 2 * np.pi / (1 - alpha))
    res = find_closed_geodesics(z.metric(), n_starts=n_starts, s_max=s_max, closure_tol=closure_tol, seed=seed)
    expected = sorted([2 * np.pi / (1 + alpha), 2 * np.pi / (1 - alpha)])
    lengths = res.lengths
    errs = [min(abs(L - e) / e for e in expected) for L in lengths]
    bound = float(period_bound_from_phi(alpha / np.sqrt(1 - alpha**2)))
    return KatokReport(float(alpha), len(lengths), lengths, 2, expected, errs, bound, res.continuum_suspected,
                       time.perf_counter() - t0, res)
