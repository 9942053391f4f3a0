"""User-defined model formulas over ``x`` and parameters ``b1..bk``.

Grammar: numbers, ``x``, ``b<k>``, ``+ - * /``, ``^`` or ``**`` for powers,
unary minus, parentheses, and the functions ``exp log sin cos sqrt pow``.
Formulas are parsed with :mod:`ast` and only whitelisted nodes are accepted.
"""

from __future__ import annotations

import ast
import operator
import re

import numpy as np

__all__ = ["ExpressionError", "CompiledExpression", "compile_expression"]

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: np.power,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "exp": (np.exp, 1),
    "log": (np.log, 1),
    "sin": (np.sin, 1),
    "cos": (np.cos, 1),
    "sqrt": (np.sqrt, 1),
    "pow": (np.power, 2),
}
_PARAM = re.compile(r"^b([1-9][0-9]*)$")


class ExpressionError(ValueError):
    pass


class CompiledExpression:
    """Callable ``f(x, beta)`` built from a formula string."""

    def __init__(self, source: str, tree: ast.Expression, arity: int):
        self.source = source
        self._tree = tree
        self.arity = arity

    def __call__(self, x, beta):
        beta = np.asarray(beta, dtype=float)
        if len(beta) != self.arity:
            raise ValueError(f"expression needs {self.arity} parameters, got {len(beta)}")
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = _evaluate(self._tree.body, x, beta)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape).copy()

    def __repr__(self):
        return f"CompiledExpression({self.source!r})"


def _evaluate(node, x, beta):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_evaluate(node.left, x, beta), _evaluate(node.right, x, beta))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_evaluate(node.operand, x, beta))
    if isinstance(node, ast.Call):
        fn, _ = _FUNCS[node.func.id]
        return fn(*(_evaluate(a, x, beta) for a in node.args))
    if isinstance(node, ast.Name):
        if node.id == "x":
            return x
        return beta[int(_PARAM.match(node.id).group(1)) - 1]
    return float(node.value)


def _check(node, params):
    if isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator {type(node.op).__name__} is not allowed")
        _check(node.left, params)
        _check(node.right, params)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ExpressionError(f"unary operator {type(node.op).__name__} is not allowed")
        _check(node.operand, params)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError(f"unknown function; allowed: {', '.join(sorted(_FUNCS))}")
        if node.keywords or len(node.args) != _FUNCS[node.func.id][1]:
            raise ExpressionError(f"{node.func.id}() takes {_FUNCS[node.func.id][1]} argument(s)")
        for a in node.args:
            _check(a, params)
    elif isinstance(node, ast.Name):
        m = _PARAM.match(node.id)
        if node.id != "x" and m is None:
            raise ExpressionError(f"unknown symbol {node.id!r}; use x and b1, b2, ...")
        if m:
            params.add(int(m.group(1)))
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
    else:
        raise ExpressionError(f"unsupported syntax: {type(node).__name__}")


def compile_expression(source: str) -> CompiledExpression:
    """Parse and validate a formula such as ``"b1 / (b2 + exp(b3*x))"``."""
    text = source.replace("^", "**")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    params: set[int] = set()
    _check(tree.body, params)
    if not params:
        raise ExpressionError(f"{source!r} has no parameters b1..bk")
    arity = max(params)
    missing = sorted(set(range(1, arity + 1)) - params)
    if missing:
        raise ExpressionError(f"{source!r} skips parameters {', '.join(f'b{k}' for k in missing)}")
    return CompiledExpression(source, tree, arity)
