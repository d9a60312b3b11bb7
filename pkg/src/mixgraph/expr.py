"""Small arithmetic expression language for initial data, histories and matrix entries.

Grammar: numbers, the variables ``x`` and ``t`` (or ``theta``), constants
``pi``, ``e`` and the imaginary unit ``i``, the operators ``+ - * / ^``
and the functions sin, cos, tan, exp, log, sqrt, abs, tanh.
Expressions are parsed with :mod:`ast` and evaluated over numpy arrays; any
other syntax is rejected with the offending line and column.
"""

from __future__ import annotations

import ast
import re

import numpy as np

from .errors import ParseError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.emath.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
}
CONSTANTS = {"pi": np.pi, "e": np.e, "i": 1j}
VARIABLES = ("x", "t", "theta")

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
# "2i" or "1.5e-3i": a number immediately followed by the imaginary unit
_IMAG_LITERAL = re.compile(r"(?<![\w.])((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)i\b")


def _fail(src: str, node, msg: str):
    line = getattr(node, "lineno", 1)
    col = getattr(node, "col_offset", 0) + 1
    raise ParseError("parse-error", f"{line}:{col}: {msg} in {src!r}")


class Expr:
    """Compiled expression; call with keyword values for the variables."""

    def __init__(self, src: str):
        self.src = src
        text = _IMAG_LITERAL.sub(r"(\1*i)", src.strip()).replace("^", "**")
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ParseError("parse-error", f"{exc.lineno or 1}:{exc.offset or 1}: invalid syntax in {src!r}") from None
        self._check(tree.body)
        self.tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                _fail(self.src, node, "only numeric literals are allowed")
        elif isinstance(node, ast.Name):
            if node.id not in CONSTANTS and node.id not in VARIABLES:
                _fail(self.src, node, f"unknown name {node.id!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                _fail(self.src, node, "unsupported operator")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                _fail(self.src, node, "unsupported unary operator")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                _fail(self.src, node, "unknown function")
            if len(node.args) != 1 or node.keywords:
                _fail(self.src, node, "functions take exactly one argument")
            self._check(node.args[0])
        else:
            _fail(self.src, node, f"unsupported syntax {type(node).__name__}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in CONSTANTS:
                return CONSTANTS[node.id]
            if node.id not in env:
                raise ParseError("parse-error", f"variable {node.id!r} is not bound in {self.src!r}")
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        return FUNCTIONS[node.func.id](self._eval(node.args[0], env))

    def __call__(self, x=None, **env):
        if x is not None:
            env["x"] = x
        if "theta" in env:
            env.setdefault("t", env["theta"])
        elif "t" in env:
            env.setdefault("theta", env["t"])
        with np.errstate(all="ignore"):
            val = self._eval(self.tree, env)
        shape = np.shape(next(iter(env.values()))) if env else ()
        return np.broadcast_to(np.asarray(val), shape).copy() if shape else np.asarray(val)[()]

    def __repr__(self):
        return f"Expr({self.src!r})"


def parse(src: str) -> Expr:
    return Expr(src)


def parse_complex(src: str) -> complex:
    """A constant expression such as ``0.5-2i`` or ``-sqrt(2)``."""
    return complex(Expr(src)())
