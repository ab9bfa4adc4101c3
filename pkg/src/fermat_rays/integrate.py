"""Batched adaptive Dormand-Prince 8(5,3) integration on chart atlases.

Every trajectory in a batch keeps its own step size, chart and end time, so
hundreds of shooting problems advance together with one vectorised
right-hand-side call per stage.  After each accepted step a trajectory that
left the 90% box of its chart is handed to the most interior chart; tangent
components of the state are pushed forward with the transition Jacobian.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .errors import StiffnessError

_NS = _dop.N_STAGES  # 12
_A = _dop.A[:_NS, :_NS]
_B = _dop.B
_C = _dop.C[:_NS]
_E3 = _dop.E3
_E5 = _dop.E5
_D = _dop.D
_A_EXTRA = _dop.A[_NS + 1:]
_C_EXTRA = _dop.C[_NS + 1:]

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
_EXPONENT = -1.0 / 8.0


@dataclass
class Trajectory:
    """Accepted steps of one integrated trajectory.

    Step ``k`` runs from ``s0[k]`` to ``s0[k] + h[k]`` entirely in chart
    ``chart[k]``; ``y0``/``y1`` and ``f0``/``f1`` are its end states and
    derivatives in that chart.  ``dense`` holds the 7th-order interpolation
    coefficients when they were requested.
    """

    s0: np.ndarray
    h: np.ndarray
    chart: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    dense: np.ndarray | None
    s_end: float
    y_end: np.ndarray
    chart_end: int
    escaped: bool = False
    exit_time: float = np.nan
    failed: bool = False

    @property
    def nsteps(self):
        return len(self.h)

    def nodes(self):
        """Step-start states plus the final state: ``(s, y, chart)``."""
        s = np.append(self.s0, self.s_end)
        y = np.vstack([self.y0, self.y_end[None]]) if self.nsteps else self.y_end[None].copy()
        c = np.append(self.chart, self.chart_end).astype(int)
        return s, y, c

    def at(self, s):
        """State at parameter(s) ``s``; returns ``(y, chart)``."""
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        if self.nsteps == 0:
            y = np.broadcast_to(self.y_end, s.shape + self.y_end.shape).copy()
            c = np.full(s.shape, self.chart_end)
            return (y[0], int(c[0])) if scalar else (y, c)
        k = np.clip(np.searchsorted(self.s0, s, side="right") - 1, 0, self.nsteps - 1)
        h = self.h[k]
        x = ((s - self.s0[k]) / h)[:, None]
        if self.dense is not None:
            F = self.dense[k]
            y = np.zeros((len(s), self.y0.shape[1]))
            for i in range(F.shape[1] - 1, -1, -1):
                y += F[:, i]
                j = F.shape[1] - 1 - i
                y *= x if j % 2 == 0 else (1.0 - x)
            y += self.y0[k]
        else:
            y0, y1 = self.y0[k], self.y1[k]
            f0, f1 = self.f0[k] * h[:, None], self.f1[k] * h[:, None]
            h00 = 2 * x**3 - 3 * x**2 + 1
            h10 = x**3 - 2 * x**2 + x
            h01 = -2 * x**3 + 3 * x**2
            h11 = x**3 - x**2
            y = h00 * y0 + h10 * f0 + h01 * y1 + h11 * f1
        c = self.chart[k]
        return (y[0], int(c[0])) if scalar else (y, c)


def _rms(a):
    return np.sqrt(np.mean(a * a, axis=-1))


def _initial_step(rhs, y0, f0, chart, rtol, atol, span):
    scale = atol + np.abs(y0) * rtol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    with np.errstate(over="ignore", divide="ignore"):
        h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, span)
    f1 = rhs(y0 + h0[:, None] * f0, chart)
    d2 = _rms((f1 - f0) / scale) / h0
    dm = np.maximum(d1, d2)
    with np.errstate(divide="ignore"):
        h1 = np.where(dm <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / dm) ** (1.0 / 8.0))
    h = np.minimum(np.minimum(100 * h0, h1), span)
    return np.where(np.isfinite(h) & (h > 0), h, 1e-6)


def integrate_batch(rhs, manifold, y0, chart0, s_end, rtol=1e-10, atol=1e-12, vectors=(),
                    dense=False, max_steps=200000, strict=True):
    """Integrate the autonomous system ``y' = rhs(y, chart)`` for a batch of initial states.

    Parameters
    ----------
    rhs : callable
        ``rhs(y (M, d), chart (M,)) -> (M, d)``.
    manifold : ChartManifold
        The first ``manifold.dim`` state components are chart coordinates.
    y0 : array (N, d)
    chart0 : int array (N,)
    s_end : float or array (N,)
    vectors : sequence of slices
        State components that are tangent vectors and must be pushed forward on
        a chart change.
    dense : bool
        Compute the 7th-order continuous extension (three extra stages per step).
    strict : bool
        Raise :class:`StiffnessError` on step underflow or an exhausted step
        budget.  Otherwise the offending trajectories are flagged ``failed``
        and the rest of the batch carries on.

    Returns a list of :class:`Trajectory`.
    """
    y = np.array(y0, dtype=float, ndmin=2)
    N, d = y.shape
    n = manifold.dim
    chart = np.broadcast_to(np.asarray(chart0, dtype=int), (N,)).copy()
    s_end = np.broadcast_to(np.asarray(s_end, dtype=float), (N,)).copy()
    s = np.zeros(N)
    f = rhs(y, chart)
    h = _initial_step(rhs, y, f, chart, rtol, atol, np.maximum(s_end, 1e-300))
    rejected = np.zeros(N, dtype=bool)
    escaped = np.zeros(N, dtype=bool)
    exit_time = np.full(N, np.nan)
    failed = np.zeros(N, dtype=bool)
    active = s_end > 0
    rec = []
    steps = 0
    n_stages = 16 if dense else 13

    while active.any():
        steps += 1
        if steps > max_steps:
            if strict:
                raise StiffnessError(f"step budget of {max_steps} exhausted")
            failed |= active
            break
        idx = np.nonzero(active)[0]
        remaining = s_end[idx] - s[idx]
        hh = np.minimum(h[idx], remaining)
        last = hh >= remaining
        yy, cc = y[idx], chart[idx]
        K = np.empty((n_stages, len(idx), d))
        K[0] = f[idx]
        for st in range(1, _NS):
            dy = np.einsum("s,smd->md", _A[st, :st], K[:st]) * hh[:, None]
            K[st] = rhs(yy + dy, cc)
        y_new = yy + hh[:, None] * np.einsum("s,smd->md", _B, K[:_NS])
        f_new = rhs(y_new, cc)
        K[_NS] = f_new

        scale = atol + np.maximum(np.abs(yy), np.abs(y_new)) * rtol
        e5 = np.einsum("s,smd->md", _E5, K[:_NS + 1]) / scale
        e3 = np.einsum("s,smd->md", _E3, K[:_NS + 1]) / scale
        e5n = np.sum(e5 * e5, axis=1)
        e3n = np.sum(e3 * e3, axis=1)
        denom = np.sqrt((e5n + 0.01 * e3n) * d)
        with np.errstate(invalid="ignore", divide="ignore"):
            err = np.where(denom > 0, hh * e5n / denom, 0.0)
        err = np.where(np.isfinite(err) & np.all(np.isfinite(y_new), axis=1), err, np.inf)
        ok = err < 1.0

        with np.errstate(divide="ignore", over="ignore"):
            grow = np.where(err == 0, MAX_FACTOR, np.minimum(MAX_FACTOR, SAFETY * err**_EXPONENT))
            shrink = np.maximum(MIN_FACTOR, SAFETY * np.where(np.isfinite(err), err, 1e300) ** _EXPONENT)
        grow = np.where(rejected[idx], np.minimum(1.0, grow), grow)
        h_next = np.where(ok, hh * grow, hh * shrink)
        tiny = 10 * np.spacing(np.maximum(np.abs(s[idx]), 1.0))
        under = ~ok & (h_next < tiny)
        if np.any(under):
            if strict:
                bad = idx[under][0]
                raise StiffnessError(f"step size underflow at s={s[bad]:.6g} (trajectory {bad})")
            failed[idx[under]] = True
            active[idx[under]] = False
        # a step clipped to hit s_end should not shrink the next proposal
        h[idx] = np.where(ok & last, np.maximum(h[idx], h_next), h_next)
        rejected[idx] = ~ok

        if not ok.any():
            continue
        a = idx[ok]
        ha = hh[ok]
        Fd = None
        if dense:
            Ka = K[:, ok]
            for st, (arow, c) in enumerate(zip(_A_EXTRA, _C_EXTRA), start=_NS + 1):
                dy = np.einsum("s,smd->md", arow[:st], Ka[:st]) * ha[:, None]
                Ka[st] = rhs(yy[ok] + dy, cc[ok])
            dy_ = y_new[ok] - yy[ok]
            Fd = np.empty((len(a), 7, d))
            Fd[:, 0] = dy_
            Fd[:, 1] = ha[:, None] * Ka[0] - dy_
            Fd[:, 2] = 2 * dy_ - ha[:, None] * (Ka[_NS] + Ka[0])
            Fd[:, 3:] = ha[:, None, None] * np.einsum("ps,smd->mpd", _D, Ka)
        rec.append((a, s[a].copy(), ha, cc[ok], yy[ok], y_new[ok], K[0, ok], f_new[ok], Fd))

        s[a] = np.where(last[ok], s_end[a], s[a] + ha)
        y[a] = y_new[ok]
        f[a] = f_new[ok]

        new_chart, new_x, J, esc = manifold.handoff(y[a, :n], chart[a])
        moved = (new_chart != chart[a]) & ~esc
        if moved.any():
            m = a[moved]
            y[m, :n] = new_x[moved]
            for sl in vectors:
                y[m, sl] = np.einsum("mij,mj->mi", J[moved], y[m, sl])
            chart[m] = new_chart[moved]
            f[m] = rhs(y[m], chart[m])
        if esc.any():
            e = a[esc]
            escaped[e] = True
            sel = np.nonzero(ok)[0][esc]
            exit_time[e] = s[e] - ha[esc] + ha[esc] * _crossing(
                manifold, yy[sel, :n], y_new[sel, :n], K[0, sel, :n] * ha[esc, None],
                f_new[sel, :n] * ha[esc, None], cc[sel])
        active = (s < s_end) & ~escaped & ~failed

    return _collect(rec, N, d, s, y, chart, escaped, exit_time, failed, dense)


def _crossing(manifold, y0, y1, d0, d1, chart, iters=60):
    """Fraction of the step where the cubic Hermite track leaves the chart box."""
    def point(t):
        t = t[:, None]
        h00, h10 = 2 * t**3 - 3 * t**2 + 1, t**3 - 2 * t**2 + t
        h01, h11 = -2 * t**3 + 3 * t**2, t**3 - t**2
        return h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1

    lo, hi = np.zeros(len(y0)), np.ones(len(y0))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = np.array([manifold._margin(p, int(c)) >= 0.0 for p, c in zip(point(mid), chart)])
        lo, hi = np.where(inside, mid, lo), np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def _collect(rec, N, d, s, y, chart, escaped, exit_time, failed, dense):
    if rec:
        owner = np.concatenate([r[0] for r in rec])
        order = np.argsort(owner, kind="stable")
        owner = owner[order]
        cols = [np.concatenate([r[i] for r in rec])[order] for i in range(1, 8)]
        Fd = np.concatenate([r[8] for r in rec])[order] if dense else None
        bounds = np.searchsorted(owner, np.arange(N + 1))
    else:
        cols = [np.empty((0,)), np.empty((0,)), np.empty((0,), int)] + [np.empty((0, d))] * 4
        Fd = np.empty((0, 7, d)) if dense else None
        bounds = np.zeros(N + 1, dtype=int)
    out = []
    for i in range(N):
        lo, hi = bounds[i], bounds[i + 1]
        out.append(
            Trajectory(
                s0=cols[0][lo:hi], h=cols[1][lo:hi], chart=cols[2][lo:hi].astype(int),
                y0=cols[3][lo:hi], y1=cols[4][lo:hi], f0=cols[5][lo:hi], f1=cols[6][lo:hi],
                dense=None if Fd is None else Fd[lo:hi],
                s_end=float(s[i]), y_end=y[i].copy(), chart_end=int(chart[i]),
                escaped=bool(escaped[i]), exit_time=float(exit_time[i]), failed=bool(failed[i]),
            )
        )
    return out
