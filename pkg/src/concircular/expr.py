"""A small whitelisted expression language for config-supplied functions.

Expressions are ordinary Python arithmetic over the names ``x1..xn`` and
``y1..yn`` (1-based), the constants ``pi`` and ``e``, and the functions
``sqrt, exp, log, sin, cos``.  They compile to callables ``f(x, y)`` that
accept either floats or jets.
"""

from __future__ import annotations

import ast
import math
import re

from . import jets
from .errors import ConfigError

_FUNCS = {"sqrt": jets.sqrt, "exp": jets.exp, "log": jets.log, "sin": jets.sin, "cos": jets.cos}
_CONSTS = {"pi": math.pi, "e": math.e}
_VAR = re.compile(r"^([xy])([1-9][0-9]*)$")
_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/", ast.Pow: "**"}


class Expression:
    """A parsed expression; call it as ``expr(x, y)``."""

    def __init__(self, source, dim, allow_y=True):
        self.source = str(source)
        self.dim = dim
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.source!r}: {exc.msg}") from None
        self.uses_y = False
        self._allow_y = allow_y
        self._check(tree.body)
        self._code = compile(tree, "<expr>", "eval")

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ConfigError(f"non-numeric literal in {self.source!r}")
        elif isinstance(node, ast.Name):
            m = _VAR.match(node.id)
            if m:
                k = int(m.group(2))
                if k > self.dim:
                    raise ConfigError(f"{node.id} exceeds dimension {self.dim} in {self.source!r}")
                if m.group(1) == "y":
                    if not self._allow_y:
                        raise ConfigError(f"{self.source!r} may depend on x only")
                    self.uses_y = True
            elif node.id not in _CONSTS:
                raise ConfigError(f"unknown name {node.id!r} in {self.source!r}")
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ConfigError(f"unsupported function call in {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ConfigError(f"{node.func.id} takes exactly one argument")
            self._check(node.args[0])
        else:
            raise ConfigError(f"unsupported syntax {type(node).__name__} in {self.source!r}")

    def __call__(self, x, y=None):
        env = dict(_FUNCS)
        env.update(_CONSTS)
        for i in range(self.dim):
            env[f"x{i + 1}"] = x[i]
            if y is not None:
                env[f"y{i + 1}"] = y[i]
        out = eval(self._code, {"__builtins__": {}}, env)  # names are whitelisted above
        return out

    def __repr__(self):
        return f"Expression({self.source!r})"


def parse(source, dim, allow_y=True):
    return Expression(source, dim, allow_y)


def parse_x(source, dim):
    """Parse a function of the base point only."""
    return Expression(source, dim, allow_y=False)
