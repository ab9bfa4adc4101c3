"""Coefficient expressions: a small arithmetic grammar compiled to numpy jets.

Accepted syntax is ``+ - * / ** ^``, parentheses, numeric literals, the
functions ``sin cos exp sqrt`` and the constant ``pi``.  Names resolve to
coordinate symbols or to numeric parameters supplied by the caller.  The
text is walked with :mod:`ast` and converted node by node, so nothing is
ever passed to ``eval``.
"""
from __future__ import annotations

import ast

import numpy as np
import sympy as sp

from .errors import ConfigurationError

_FUNCTIONS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "sqrt": sp.sqrt}
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def parse_expression(text, symbols, params=None):
    """Parse ``text`` into a sympy expression over ``symbols`` (name -> Symbol)."""
    if isinstance(text, (int, float)):
        return sp.nsimplify(text) if float(text).is_integer() else sp.Float(text)
    if not isinstance(text, str):
        raise ConfigurationError(f"expression must be a string or number, got {text!r}")
    params = params or {}
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return sp.Integer(node.value) if isinstance(node.value, int) else sp.Float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](build(node.left), build(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = build(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Name):
            if node.id in symbols:
                return symbols[node.id]
            if node.id in params:
                return sp.Float(params[node.id])
            if node.id == "pi":
                return sp.pi
            raise ConfigurationError(f"unknown name {node.id!r} in {text!r}")
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCTIONS
            and len(node.args) == 1
            and not node.keywords
        ):
            return _FUNCTIONS[node.func.id](build(node.args[0]))
        raise ConfigurationError(f"unsupported syntax in expression {text!r}")

    return build(tree)


def compile_jet(exprs, coords):
    """Compile sympy expressions into ``fn(x) -> (value, jacobian)``.

    ``exprs`` is a scalar, a (nested) list or a sympy Matrix.  ``value`` has
    shape ``(..., *shape)``; the jacobian appends one trailing axis indexing
    the coordinate derivative.  ``x`` has shape ``(..., n)``.
    """
    if isinstance(exprs, sp.MatrixBase):
        shape = exprs.shape
        flat = list(exprs)
    elif isinstance(exprs, (list, tuple)):
        arr = np.array(exprs, dtype=object)
        shape = arr.shape
        flat = list(arr.ravel())
    else:
        shape = ()
        flat = [exprs]
    flat = [sp.sympify(e) for e in flat]
    n = len(coords)
    derivs = [sp.diff(e, c) for e in flat for c in coords]
    fn = sp.lambdify(coords, flat + derivs, modules="numpy", cse=True)
    m = len(flat)

    def jet(x):
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        out = fn(*np.moveaxis(x, -1, 0))
        vals = np.empty(batch + (m,))
        jac = np.empty(batch + (m * n,))
        for i in range(m):
            vals[..., i] = out[i]
        for i in range(m * n):
            jac[..., i] = out[m + i]
        return vals.reshape(batch + tuple(shape)), jac.reshape(batch + tuple(shape) + (n,))

    return jet


# simplify is superlinear in expression size; big converted coefficients are compiled as they are
SIMPLIFY_OPS = 150


def tidy(expr):
    """Simplify small expressions elementwise and leave large ones alone."""
    if isinstance(expr, sp.MatrixBase):
        return expr.applyfunc(tidy)
    return sp.simplify(expr) if sp.count_ops(expr) <= SIMPLIFY_OPS else expr


def pullback_metric(G, X, u):
    """Pull an ambient matrix field ``G(X)`` back through the embedding ``X(u)``."""
    J = sp.Matrix(X).jacobian(u)
    return tidy(J.T * G * J)


def project_vector(V, X, u):
    """Chart components of an ambient field: ``(J^T J)^{-1} J^T V(X(u))``."""
    J = sp.Matrix(X).jacobian(u)
    P = sp.simplify((J.T * J).inv() * J.T)
    return tidy(P * sp.Matrix(V))
