"""Closed-form coefficient expressions.

Coefficient and source fields in experiment configs are strings over the
symbols ``y1``, ``y2``, ``t`` (``y`` is accepted as an alias of ``y1``), the
constants ``pi`` and ``e``, numeric literals, the binary operators
``+ - * /``, unary minus, and the functions ``sin``, ``cos``, ``exp``.
Anything else is rejected at parse time.

    >>> f = Expr("1 + 0.5*sin(2*pi*t)")
    >>> float(f(np.zeros((1, 1)), 0.25)[0])
    1.5
"""

from __future__ import annotations

import ast
import math

import numpy as np

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": math.pi, "e": math.e}
_SYMBOLS = {"y": 0, "y1": 0, "y2": 1, "t": None}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
}


class ExpressionError(ValueError):
    pass


def _check(node: ast.AST, text: str) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, text)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed in {text!r}")
        _check(node.left, text)
        _check(node.right, text)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ExpressionError(f"unary operator not allowed in {text!r}")
        _check(node.operand, text)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError(f"unknown function in {text!r}")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"functions take exactly one argument: {text!r}")
        _check(node.args[0], text)
    elif isinstance(node, ast.Name):
        if node.id not in _SYMBOLS and node.id not in _CONSTS:
            raise ExpressionError(f"unknown symbol {node.id!r} in {text!r}")
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"non-numeric literal in {text!r}")
    else:
        raise ExpressionError(f"unsupported syntax {type(node).__name__} in {text!r}")


class Expr:
    """A parsed scalar field ``g(y, t)``.

    Calling an ``Expr`` with an ``(N, dim)`` array of points and a scalar time
    returns an array of ``N`` values.
    """

    def __init__(self, text: str | float | int):
        self.text = str(text).strip()
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {self.text!r}: {exc.msg}") from None
        _check(tree, self.text)
        self._tree = tree.body
        names = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
        self.depends_on_t = "t" in names
        self.depends_on_y = bool(names & {"y", "y1", "y2"})
        self.max_axis = max((_SYMBOLS[n] for n in names if _SYMBOLS.get(n) is not None), default=-1)

    def _eval(self, node, pts, t):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, pts, t), self._eval(node.right, pts, t))
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, pts, t)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](self._eval(node.args[0], pts, t))
        if isinstance(node, ast.Name):
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            axis = _SYMBOLS[node.id]
            return t if axis is None else pts[:, axis]
        return float(node.value)

    def __call__(self, points, t: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.max_axis >= pts.shape[1]:
            raise ExpressionError(f"{self.text!r} uses y{self.max_axis + 1} on a {pts.shape[1]}D grid")
        out = self._eval(self._tree, pts, float(t))
        return np.broadcast_to(np.asarray(out, dtype=float), (pts.shape[0],)).copy()

    def constant_value(self) -> float:
        """Evaluate an expression that involves no symbols."""
        if self.depends_on_t or self.depends_on_y:
            raise ExpressionError(f"{self.text!r} is not a constant")
        return float(self._eval(self._tree, np.zeros((1, 1)), 0.0))

    def __repr__(self):
        return f"Expr({self.text!r})"

    def __str__(self):
        return self.text


def as_field(value):
    """Coerce strings and numbers to :class:`Expr`; pass callables through."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, (str, int, float)) and not isinstance(value, bool):
        return Expr(value)
    if callable(value):
        return value
    raise TypeError(f"cannot interpret {value!r} as a field")


def evaluate(field, points, t: float) -> np.ndarray:
    """Evaluate an Expr or a plain callable ``g(points, t)`` at nodes."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.broadcast_to(np.asarray(field(pts, t), dtype=float), (pts.shape[0],)).astype(float)


def parse_number(value) -> float:
    """Numbers in configs may be literals or constant expressions like ``"pi/100"``."""
    if isinstance(value, bool):
        raise ExpressionError("booleans are not numbers")
    if isinstance(value, (int, float)):
        return float(value)
    return Expr(value).constant_value()
