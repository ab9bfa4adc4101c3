"""JSON metric documents: loading into numeric data and symbolic conversion between kinds.

A document looks like::

    {"kind": "zermelo", "geometry": "sphere:2", "params": {"a": 0.4},
     "g": "round", "W": ["-a*X2", "a*X1", "0"]}

Stationary documents carry ``g0``, ``beta``, ``delta``; Randers documents
``h`` and ``B`` (the ``h``-dual of the one-form); Zermelo documents ``g`` and
``W``.  On spheres every coefficient is written in ambient coordinates
``X1..X(n+1)`` and vector fields must be tangent.
"""
from __future__ import annotations

import numpy as np
import sympy as sp

from .errors import ConfigurationError
from .expressions import parse_expression
from .finsler import RandersData, StationaryData, ZermeloData
from .geometry import field_from_expressions, manifold_from_name

FIELDS = {
    "stationary": {"g0": "metric", "beta": "scalar", "delta": "vector"},
    "randers": {"h": "metric", "B": "vector"},
    "zermelo": {"g": "metric", "W": "vector"},
}
_BUILD = {"stationary": StationaryData, "randers": RandersData, "zermelo": ZermeloData}
_OPTIONAL = {"kind", "geometry", "params", "name", "description"}


def validate_document(doc):
    if not isinstance(doc, dict):
        raise ConfigurationError("a metric document must be a JSON object")
    kind = doc.get("kind")
    if kind not in FIELDS:
        raise ConfigurationError(f"unknown metric kind {kind!r}; expected one of {sorted(FIELDS)}")
    if "geometry" not in doc:
        raise ConfigurationError("metric document needs a 'geometry'")
    allowed = _OPTIONAL | set(FIELDS[kind])
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigurationError(f"unknown keys in {kind} document: {unknown}")
    missing = [k for k in FIELDS[kind] if k not in doc]
    if missing:
        raise ConfigurationError(f"{kind} document is missing {missing}")
    params = doc.get("params", {})
    if not isinstance(params, dict) or not all(isinstance(v, (int, float)) for v in params.values()):
        raise ConfigurationError("'params' must map names to numbers")
    return kind


def _check_tangent(manifold, exprs, params, name, n_points=64):
    """Ambient vector fields on spheres must satisfy ``X . V(X) = 0``."""
    syms = manifold.expression_symbols()
    X = [syms[c] for c in manifold.coordinate_names]
    V = [parse_expression(e, syms, params) for e in exprs]
    fn = sp.lambdify(X, sum(a * b for a, b in zip(X, V)), "numpy")
    P = np.random.default_rng(0).standard_normal((n_points, len(X)))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    dot = np.broadcast_to(fn(*P.T), (n_points,))
    if np.max(np.abs(dot)) > 1e-10:
        raise ConfigurationError(f"field {name!r} is not tangent to the sphere (max |X.V| = {np.max(np.abs(dot)):.3g})")


def load_document(doc):
    """Numeric :class:`StationaryData`, :class:`RandersData` or :class:`ZermeloData`."""
    kind = validate_document(doc)
    try:
        m = manifold_from_name(doc["geometry"])
    except (ValueError, KeyError) as exc:
        raise ConfigurationError(f"unknown geometry {doc['geometry']!r}") from exc
    params = doc.get("params", {})
    fields = []
    for key, typ in FIELDS[kind].items():
        exprs = doc[key]
        if typ == "vector" and m.ambient_dim:
            _check_tangent(m, exprs, params, key)
        fields.append(field_from_expressions(m, typ, exprs, params))
    return _BUILD[kind](*fields)


# --- symbolic conversion ---------------------------------------------------------


def _symbolic(doc):
    m = manifold_from_name(doc["geometry"])
    syms = dict(m.expression_symbols())
    for p in doc.get("params", {}):
        syms[p] = sp.Symbol(p, real=True)
    k = m.ambient_dim or m.dim
    out = {}
    for key, typ in FIELDS[doc["kind"]].items():
        e = doc[key]
        if typ == "scalar":
            out[key] = parse_expression(e, syms)
        elif typ == "vector":
            out[key] = sp.Matrix([parse_expression(c, syms) for c in e])
        elif isinstance(e, str):
            if e not in ("euclidean", "round", "identity"):
                raise ConfigurationError(f"unknown metric keyword {e!r}")
            out[key] = sp.eye(k)
        else:
            out[key] = sp.Matrix([[parse_expression(c, syms) for c in row] for row in e])
    return out, syms


def _emit(kind, doc, exprs):
    new = {"kind": kind, "geometry": doc["geometry"]}
    if doc.get("params"):
        new["params"] = dict(doc["params"])
    for key, typ in FIELDS[kind].items():
        e = exprs[key]
        if typ == "scalar":
            new[key] = str(e)
        elif typ == "vector":
            new[key] = [str(c) for c in e]
        else:
            new[key] = [[str(e[i, j]) for j in range(e.shape[1])] for i in range(e.shape[0])]
    return new


def _to_zermelo(kind, f, gauge):
    if kind == "zermelo":
        return f
    if kind == "stationary":
        q = (f["delta"].T * f["g0"] * f["delta"])[0, 0]
        return {"g": f["g0"] / (f["beta"] + q), "W": -f["delta"]}
    w = f["h"] * f["B"]
    eps = 1 - (f["B"].T * w)[0, 0]
    return {"g": eps * (f["h"] - w * w.T), "W": -f["B"] / eps}


def _from_zermelo(kind, z, gauge):
    if kind == "zermelo":
        return z
    alpha = 1 - (z["W"].T * z["g"] * z["W"])[0, 0]
    if kind == "stationary":
        return {"g0": z["g"] / gauge, "beta": alpha / gauge, "delta": -z["W"]}
    w = z["g"] * z["W"]
    return {"h": z["g"] / alpha + w * w.T / alpha**2, "B": -alpha * z["W"]}


def convert_document(doc, to_kind, gauge="1"):
    """Rewrite a metric document as another kind.

    The conversion formulas are applied to the coefficient expressions
    symbolically and emitted unsimplified; ``gauge`` is the positive function
    used when producing stationary data.
    """
    kind = validate_document(doc)
    if to_kind not in FIELDS:
        raise ConfigurationError(f"unknown target kind {to_kind!r}")
    if to_kind == kind and kind != "stationary":
        # the composed formulas are the identity; stationary data is re-gauged instead
        return {k: v for k, v in doc.items() if k in _OPTIONAL | set(FIELDS[kind])}
    f, syms = _symbolic(doc)
    phi = parse_expression(gauge, syms)
    return _emit(to_kind, doc, _from_zermelo(to_kind, _to_zermelo(kind, f, phi), phi))
