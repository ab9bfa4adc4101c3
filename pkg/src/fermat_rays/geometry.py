"""Chart atlases, smooth fields with derivative jets, Christoffel symbols and flows.

Array conventions used throughout the package: points are ``(..., n)``;
a derivative axis is always appended *last*, so ``dg[..., i, j, k]`` is
``d g_ij / d x^k`` and ``J[..., i, k]`` is ``d V^i / d x^k``.  Chart ids
are integers (scalar, or an integer array matching the batch shape).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import ConfigurationError, DomainError, EscapeError, InvariantViolation
from .expressions import compile_jet, parse_expression, project_vector, pullback_metric, tidy

SHRINK = 0.9


@dataclass(frozen=True)
class Chart:
    name: str
    lo: np.ndarray
    hi: np.ndarray
    embedding: tuple | None = None  # sympy expressions X(u) for embedded manifolds

    @property
    def center(self):
        return np.where(np.isfinite(self.lo + self.hi), 0.5 * (self.lo + self.hi), 0.0)

    @property
    def halfwidth(self):
        return 0.5 * (self.hi - self.lo)


def _inversion(x):
    r2 = np.einsum("...i,...i->...", x, x)
    y = x / r2[..., None]
    n = x.shape[-1]
    J = (np.eye(n) * r2[..., None, None] - 2.0 * x[..., :, None] * x[..., None, :]) / (r2**2)[..., None, None]
    return y, J


@dataclass(frozen=True)
class ChartManifold:
    """A manifold given by a finite atlas of coordinate boxes.

    ``transitions[(a, b)]`` maps chart-``a`` coordinates to chart ``b`` and
    returns the Jacobian alongside.  ``periods`` holds one period per axis
    (``nan`` for a non-periodic axis) or is ``None``.
    """

    name: str
    dim: int
    charts: tuple
    transitions: dict = field(default_factory=dict)
    periods: np.ndarray | None = None
    compact: bool = False
    ambient_dim: int | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError("dim must be >= 1")
        for c in self.charts:
            if np.any(c.hi <= c.lo):
                raise ConfigurationError(f"chart {c.name!r} has an empty domain")

    # --- coordinates -------------------------------------------------------

    @property
    def coordinate_names(self):
        """Names usable in coefficient expressions."""
        if self.ambient_dim:
            return [f"X{i + 1}" for i in range(self.ambient_dim)]
        return [f"x{i + 1}" for i in range(self.dim)]

    def expression_symbols(self):
        names = self.coordinate_names
        syms = {n: sp.Symbol(n, real=True) for n in names}
        aliases = "XYZ" if self.ambient_dim else "xyz"
        if len(names) <= 3:
            for a, n in zip(aliases, names):
                syms[a] = syms[n]
        return syms

    def transform(self, x, src, dst):
        x = np.asarray(x, dtype=float)
        if src == dst:
            return x.copy(), np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,)).copy()
        try:
            return self.transitions[(src, dst)](x)
        except KeyError:
            raise DomainError(f"no transition from chart {src} to chart {dst}") from None

    def _margin(self, x, chart):
        c = self.charts[chart]
        with np.errstate(invalid="ignore"):
            m = (c.halfwidth - np.abs(x - c.center)) / c.halfwidth
        m = np.where(np.isfinite(c.halfwidth), m, 1.0)
        m = np.where(np.isfinite(x), m, -np.inf)
        return m.min(axis=-1)

    def inside(self, x, chart, shrink=1.0):
        return self._margin(np.asarray(x, dtype=float), chart) >= 1.0 - shrink

    def check_point(self, x, chart):
        if not np.all(self.inside(x, chart)):
            raise DomainError(f"point {np.asarray(x).tolist()} lies outside chart {self.charts[chart].name!r}")

    def handoff(self, x, chart):
        """Move points that left the shrunken box of their chart to the most interior chart.

        Returns ``(new_chart, new_x, J, escaped)`` for a batch ``x (M, n)`` with
        ``chart (M,)``.  ``J`` maps tangent vectors old -> new.
        """
        x = np.asarray(x, dtype=float)
        chart = np.asarray(chart)
        M = x.shape[0]
        new_chart = chart.copy()
        new_x = x.copy()
        J = np.broadcast_to(np.eye(self.dim), (M, self.dim, self.dim)).copy()
        escaped = np.zeros(M, dtype=bool)
        best = np.full(M, -np.inf)
        for c in np.unique(chart):
            sel = chart == c
            best[sel] = self._margin(x[sel], c)
        need = best < 1.0 - SHRINK
        if not need.any() or len(self.charts) == 1:
            escaped[need] = best[need] < 0.0
            return new_chart, new_x, J, escaped
        for c_src in np.unique(chart[need]):
            sel = np.nonzero(need & (chart == c_src))[0]
            xs = x[sel]
            for c_dst in range(len(self.charts)):
                if c_dst == c_src or (c_src, c_dst) not in self.transitions:
                    continue
                with np.errstate(divide="ignore", invalid="ignore"):
                    y, Jy = self.transitions[(c_src, c_dst)](xs)
                m = self._margin(y, c_dst)
                better = m > best[sel]
                idx = sel[better]
                best[idx] = m[better]
                new_chart[idx] = c_dst
                new_x[idx] = y[better]
                J[idx] = Jy[better]
        escaped = best < 0.0
        return new_chart, new_x, J, escaped

    def wrap(self, dx):
        """Minimum-image difference on periodic axes."""
        if self.periods is None:
            return dx
        p = self.periods
        per = np.isfinite(p)
        out = np.array(dx, dtype=float, copy=True)
        out[..., per] -= p[per] * np.round(out[..., per] / p[per])
        return out

    def difference(self, xa, ca, xb, cb):
        """Coordinate difference ``xb - xa`` expressed in chart ``ca`` (point ``xb`` moved over)."""
        xb = np.asarray(xb, dtype=float)
        if ca != cb:
            xb, _ = self.transform(xb, cb, ca)
        return self.wrap(xb - np.asarray(xa, dtype=float))

    def distance(self, xa, ca, xb, cb):
        """Chart-coordinate distance; the point is moved into the chart where it is representable."""
        xa = np.asarray(xa, dtype=float)
        xb = np.asarray(xb, dtype=float)
        if ca == cb:
            return np.linalg.norm(self.wrap(xb - xa), axis=-1)
        if np.all(self.inside(xa, ca)):
            yb, _ = self.transform(xb, cb, ca)
            if np.all(np.isfinite(yb)) and np.all(self.inside(yb, ca)):
                return np.linalg.norm(self.wrap(yb - xa), axis=-1)
        ya, _ = self.transform(xa, ca, cb)
        return np.linalg.norm(self.wrap(xb - ya), axis=-1)

    # --- embedded manifolds ------------------------------------------------

    def to_ambient(self, x, chart):
        """Embedding coordinates (sphere) or the chart coordinates themselves."""
        x = np.asarray(x, dtype=float)
        if not self.ambient_dim:
            return x.copy()
        r2 = np.einsum("...i,...i->...", x, x)[..., None]
        last = np.where(np.asarray(chart)[..., None] == 0, r2 - 1.0, 1.0 - r2)
        return np.concatenate([2.0 * x, last], axis=-1) / (1.0 + r2)

    def ambient_tangent(self, x, v, chart):
        """Push chart velocities ``v`` at ``x`` forward to embedding coordinates."""
        v = np.asarray(v, dtype=float)
        if not self.ambient_dim:
            return v.copy()
        x = np.asarray(x, dtype=float)
        r2 = np.einsum("...i,...i->...", x, x)[..., None]
        uv = np.einsum("...i,...i->...", x, v)[..., None]
        d = 1.0 + r2
        sign = np.where(np.asarray(chart)[..., None] == 0, 1.0, -1.0)
        head = 2.0 * v / d - 4.0 * x * uv / d**2
        return np.concatenate([head, sign * 4.0 * uv / d**2], axis=-1)

    def from_ambient(self, X):
        """Chart coordinates of ambient sphere points, picking the chart away from the projection pole."""
        X = np.asarray(X, dtype=float)
        chart = (X[..., -1] >= 0).astype(int)
        denom = np.where(chart == 0, 1.0 - X[..., -1], 1.0 + X[..., -1])
        return X[..., :-1] / denom[..., None], chart

    # --- sampling ----------------------------------------------------------

    def sample(self, rng, n, bounds=None):
        """Random points ``(x (n, dim), chart (n,))``; noncompact manifolds need ``bounds``."""
        if self.ambient_dim:
            X = rng.standard_normal((n, self.ambient_dim))
            X /= np.linalg.norm(X, axis=1, keepdims=True)
            return self.from_ambient(X)
        if bounds is None:
            if self.periods is not None and np.all(np.isfinite(self.periods)):
                bounds = np.stack([np.zeros(self.dim), self.periods], axis=1)
            else:
                raise ConfigurationError(f"{self.name} is not compact: declare sampling bounds")
        bounds = np.asarray(bounds, dtype=float)
        x = bounds[:, 0] + rng.random((n, self.dim)) * (bounds[:, 1] - bounds[:, 0])
        return x, np.zeros(n, dtype=int)

    def grid(self, resolution, bounds=None):
        """Tensor grids covering the manifold, as a list of ``(chart, points)``."""
        out = []
        if self.ambient_dim:
            for c, chart in enumerate(self.charts):
                axes = [np.linspace(-1.0, 1.0, resolution)] * self.dim
                pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
                # the unit ball of each stereographic chart is one closed hemisphere
                out.append((c, pts[np.einsum("ij,ij->i", pts, pts) <= 1.0]))
            return out
        if bounds is None:
            if self.periods is not None and np.all(np.isfinite(self.periods)):
                bounds = np.stack([np.zeros(self.dim), self.periods], axis=1)
            else:
                raise ConfigurationError(f"{self.name} is not compact: declare grid bounds")
        bounds = np.asarray(bounds, dtype=float)
        axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return [(0, pts)]


def euclidean(n):
    box = np.full(n, np.inf)
    return ChartManifold(f"euclidean:{n}", n, (Chart("R", -box, box),))


def torus(n, period=1.0):
    box = np.full(n, np.inf)
    return ChartManifold(
        f"torus:{n}", n, (Chart("T", -box, box),), periods=np.full(n, float(period)), compact=True
    )


def sphere(n, radius=2.0):
    """Round S^n with stereographic charts from the north (0) and south (1) poles."""
    u = sp.symbols(f"u1:{n + 1}", real=True)
    r2 = sum(ui**2 for ui in u)
    north = tuple([2 * ui / (1 + r2) for ui in u] + [(r2 - 1) / (1 + r2)])
    south = tuple([2 * ui / (1 + r2) for ui in u] + [(1 - r2) / (1 + r2)])
    box = np.full(n, radius)
    charts = (Chart("north", -box, box, north), Chart("south", -box, box, south))
    return ChartManifold(
        f"sphere:{n}", n, charts, transitions={(0, 1): _inversion, (1, 0): _inversion},
        compact=True, ambient_dim=n + 1,
    )


def manifold_from_name(name):
    try:
        kind, n = name.split(":")
        n = int(n)
    except ValueError:
        raise ConfigurationError(f"bad geometry name {name!r}") from None
    if kind == "euclidean":
        return euclidean(n)
    if kind == "torus":
        return torus(n)
    if kind == "sphere":
        return sphere(n)
    raise ConfigurationError(f"unknown geometry {name!r}")


# --- fields ------------------------------------------------------------------


def _dispatch(fn, x, chart):
    """Evaluate a per-chart jet function on a batch whose points may sit in different charts."""
    if np.ndim(chart) == 0:
        return fn(np.asarray(x, dtype=float), int(chart))
    x = np.asarray(x, dtype=float)
    chart = np.asarray(chart)
    charts = np.unique(chart)
    if len(charts) == 1:
        return fn(x, int(charts[0]))
    outs = None
    for c in charts:
        sel = chart == c
        part = fn(x[sel], int(c))
        if outs is None:
            outs = [np.empty(chart.shape + p.shape[1:]) for p in part]
        for o, p in zip(outs, part):
            o[sel] = p
    return tuple(outs)


class _Field:
    def __init__(self, manifold, jet, label=""):
        self.manifold = manifold
        self._jet = jet
        self.label = label

    def jet(self, x, chart=0):
        return _dispatch(self._jet, x, chart)

    def __call__(self, x, chart=0):
        return self.jet(x, chart)[0]

    def __repr__(self):
        return f"{type(self).__name__}({self.label or '<closure>'} on {self.manifold.name})"


class ScalarField(_Field):
    """``jet -> (f (...,), grad (..., n))``."""

    @classmethod
    def constant(cls, manifold, value):
        n = manifold.dim

        def jet(x, chart):
            b = x.shape[:-1]
            return np.full(b, float(value)), np.zeros(b + (n,))

        return cls(manifold, jet, label=repr(value))


class VectorField(_Field):
    """``jet -> (V (..., n), J (..., n, n))`` with ``J[..., i, k] = d_k V^i``."""

    @classmethod
    def zero(cls, manifold):
        n = manifold.dim

        def jet(x, chart):
            b = x.shape[:-1]
            return np.zeros(b + (n,)), np.zeros(b + (n, n))

        return cls(manifold, jet, label="0")

    @classmethod
    def constant(cls, manifold, value):
        value = np.asarray(value, dtype=float)
        n = manifold.dim

        def jet(x, chart):
            b = x.shape[:-1]
            return np.broadcast_to(value, b + (n,)).copy(), np.zeros(b + (n, n))

        return cls(manifold, jet, label=str(value.tolist()))

    def __neg__(self):
        def jet(x, chart):
            V, J = self._jet(x, chart)
            return -V, -J

        return VectorField(self.manifold, jet, label=f"-({self.label})")

    def scaled(self, c):
        def jet(x, chart):
            V, J = self._jet(x, chart)
            return c * V, c * J

        return VectorField(self.manifold, jet, label=f"{c}*({self.label})")


class RiemannMetric(_Field):
    """``jet -> (g (..., n, n), dg (..., n, n, n))`` with ``dg[..., i, j, k] = d_k g_ij``."""

    @classmethod
    def euclidean(cls, manifold, scale=1.0):
        n = manifold.dim

        def jet(x, chart):
            b = x.shape[:-1]
            return np.broadcast_to(scale * np.eye(n), b + (n, n)).copy(), np.zeros(b + (n, n, n))

        return cls(manifold, jet, label="euclidean")

    def check(self, x, chart=0):
        """Raise unless symmetric (1e-14) and positive definite at the given points."""
        g = self(x, chart)
        if np.max(np.abs(g - np.swapaxes(g, -1, -2)), initial=0.0) > 1e-14 * max(1.0, np.max(np.abs(g))):
            raise InvariantViolation("metric is not symmetric")
        if np.any(np.linalg.eigvalsh(g)[..., 0] <= 0):
            raise InvariantViolation("metric is not positive definite")


def field_from_expressions(manifold, kind, exprs, params=None):
    """Compile coefficient expressions into a field on every chart.

    Flat manifolds take expressions in chart coordinates ``x1..xn``; spheres take
    ambient coordinates ``X1..X(n+1)`` and the result is pulled back (metrics) or
    tangentially projected (vector fields) into each stereographic chart.
    ``kind`` is ``"scalar"``, ``"vector"`` or ``"metric"``.
    """
    syms = manifold.expression_symbols()
    m = manifold.ambient_dim or manifold.dim
    if kind == "scalar":
        E = parse_expression(exprs, syms, params)
    elif kind == "vector":
        if len(exprs) != m:
            raise ConfigurationError(f"vector field needs {m} components, got {len(exprs)}")
        E = sp.Matrix([parse_expression(e, syms, params) for e in exprs])
    elif kind == "metric":
        if exprs in ("euclidean", "round", "identity"):
            E = sp.eye(m)
        else:
            if len(exprs) != m or any(len(row) != m for row in exprs):
                raise ConfigurationError(f"metric needs a {m}x{m} matrix")
            E = sp.Matrix([[parse_expression(e, syms, params) for e in row] for row in exprs])
            if tidy(E - E.T) != sp.zeros(m, m):
                raise ConfigurationError("metric expression matrix is not symmetric")
    else:
        raise ValueError(kind)

    ambient = [syms[nm] for nm in manifold.coordinate_names]
    jets = []
    for chart in manifold.charts:
        if manifold.ambient_dim:
            u = list(sp.ordered(set().union(*[sp.sympify(e).free_symbols for e in chart.embedding])))
            sub = dict(zip(ambient, chart.embedding))
            if kind == "scalar":
                C = tidy(E.subs(sub))
            elif kind == "vector":
                C = project_vector(E.subs(sub), chart.embedding, u)
            else:
                C = pullback_metric(E.subs(sub), chart.embedding, u)
            coords = u
        else:
            C, coords = E, ambient
        if kind == "vector":
            C = list(C)
        jets.append(compile_jet(C, coords))

    def jet(x, chart):
        return jets[chart](x)

    label = str(exprs) if not isinstance(exprs, str) or len(exprs) < 60 else exprs[:57] + "..."
    cls = {"scalar": ScalarField, "vector": VectorField, "metric": RiemannMetric}[kind]
    return cls(manifold, jet, label=label)


def round_metric(manifold):
    return field_from_expressions(manifold, "metric", "round")


def rotation_field(manifold):
    """Killing field of the rotation about the polar (last) axis: ``(-X2, X1, 0, ...)``."""
    m = manifold.ambient_dim
    comps = ["-X2", "X1"] + ["0"] * (m - 2)
    return field_from_expressions(manifold, "vector", comps)


# --- operations --------------------------------------------------------------


def christoffel(metric, x, chart=0):
    """``Gamma[..., k, i, j]`` of the Levi-Civita connection."""
    if np.ndim(chart) == 0:
        metric.manifold.check_point(x, int(chart))
    g, dg = metric.jet(x, chart)
    ginv = np.linalg.inv(g)
    # d_i g_mj + d_j g_mi - d_m g_ij
    t = np.swapaxes(dg, -1, -2) + dg - np.moveaxis(dg, -1, -3)
    return 0.5 * np.einsum("...km,...mij->...kij", ginv, t)


def flow(field, x0, t, chart=0, tol=1e-12):
    """Time-``t`` flow of a vector field: returns ``(x, chart)``."""
    from .integrate import integrate_batch

    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if t == 0:
        return x0[0].copy(), int(chart)
    m = field.manifold

    sign = 1.0 if t > 0 else -1.0

    def rhs(y, c):
        return sign * field.jet(y, c)[0]

    traj = integrate_batch(rhs, m, x0, np.atleast_1d(chart), abs(t), rtol=tol, atol=tol)[0]
    if traj.escaped:
        raise EscapeError(f"flow left the atlas at t={sign * traj.exit_time:.6g}", sign * traj.exit_time)
    return traj.y_end, traj.chart_end
