"""Safe arithmetic expressions over ``x1..xn`` for boundary data.

``^`` is read as a power.  Evaluation is vectorised over an array of points.
"""

from __future__ import annotations

import ast
import math

import numpy as np


class ExpressionError(ValueError):
    pass


def _log(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ExpressionError("log of a nonpositive value")
    return np.log(x)


def _sqrt(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ExpressionError("sqrt of a negative value")
    return np.sqrt(x)


def _min(*args):
    if not args:
        raise ExpressionError("min needs arguments")
    out = np.asarray(args[0], dtype=float)
    for a in args[1:]:
        out = np.minimum(out, a)
    return out


def _max(*args):
    if not args:
        raise ExpressionError("max needs arguments")
    out = np.asarray(args[0], dtype=float)
    for a in args[1:]:
        out = np.maximum(out, a)
    return out


FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "log": _log, "sqrt": _sqrt,
    "abs": np.abs, "min": _min, "max": _max,
}
CONSTANTS = {"pi": math.pi, "e": math.e}


def _divide(a, b):
    b = np.asarray(b, dtype=float)
    if np.any(b == 0):
        raise ExpressionError("division by zero")
    return np.asarray(a, dtype=float) / b


def _power(a, b):
    with np.errstate(invalid="ignore"):
        out = np.power(np.asarray(a, dtype=float), b)
    if np.any(~np.isfinite(out)):
        raise ExpressionError("power produced a non-finite value")
    return out


_BINOPS = {
    ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: _divide,
    ast.Pow: _power,
}


class Expression:
    """Parsed expression; call with an ``(m, n)`` array or a single point."""

    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        try:
            # '^' must bind like '**', not like Python's xor
            tree = ast.parse(text.strip().replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self.tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ExpressionError("unary operator not allowed")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS) or node.keywords:
                raise ExpressionError("unknown function call")
            for a in node.args:
                self._check(a)
        elif isinstance(node, ast.Name):
            if node.id not in CONSTANTS and node.id not in self._variables():
                raise ExpressionError(f"unknown name {node.id!r}")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError("only numeric constants are allowed")
        else:
            raise ExpressionError(f"syntax {type(node).__name__} not allowed")

    def _variables(self):
        return {f"x{i + 1}" for i in range(self.dim)}

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            return FUNCTIONS[node.func.id](*[self._eval(a, env) for a in node.args])
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else CONSTANTS[node.id]
        return float(node.value)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        P = np.atleast_2d(X)
        if P.shape[1] != self.dim:
            raise ExpressionError(f"expected points of dimension {self.dim}")
        env = {f"x{i + 1}": P[:, i] for i in range(self.dim)}
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(self._eval(self.tree, env), dtype=float),
                                  (P.shape[0],)).copy()
        if np.any(~np.isfinite(out)):
            raise ExpressionError("expression produced a non-finite value")
        return float(out[0]) if single else out


def expression_eval(expr: str, point) -> float:
    p = np.asarray(point, dtype=float).reshape(-1)
    return Expression(expr, p.size)(p)
