"""A small expression language for reproducible element descriptors.

Stage elements::

    unit | zero | e(g, h) | psi(k, <ga>) | random(seed) | adj(<x>)
    <x> + <x> | <x> - <x> | <x> * <x> | number * <x>
    amp(<x>, [[1, 0], [0, 1]]) | matrix([[<x>, <x>], [<x>, <x>]])

Group algebra elements (inside ``psi``)::

    delta(s) | star(<ga>) | sums, differences, products, scalar multiples

``k`` is bound to the stage the element lives in, so ``psi(k, delta(1))``
works for every k.  For systems without group labels ``e(i, j)`` or
``e(block, i, j)`` address matrix units by position.  Parsing uses the
standard-library :mod:`ast`; nothing is ever passed to ``eval``.
"""
from __future__ import annotations

import ast
import operator
from numbers import Number

import numpy as np

from .errors import ConfigError
from .fdcstar import AlgElement, amplify_elem, from_entries
from .groupalg import GroupAlgebraElement, delta, involute

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul}


class ExpressionError(ConfigError):
    pass


class _Evaluator:
    def __init__(self, sysc, k, approx=None, seed=0):
        self.sysc = sysc
        self.k = k
        self.approx = approx
        self.seed = seed

    @property
    def algebra(self):
        return self.sysc.algebras[self.k]

    def eval(self, node):
        method = getattr(self, "_" + type(node).__name__, None)
        if method is None:
            raise ExpressionError(f"unsupported syntax: {type(node).__name__}")
        return method(node)

    def _Expression(self, node):
        return self.eval(node.body)

    def _Constant(self, node):
        if isinstance(node.value, Number) and not isinstance(node.value, bool):
            return node.value
        raise ExpressionError(f"unsupported constant {node.value!r}")

    def _Tuple(self, node):
        return tuple(self.eval(e) for e in node.elts)

    def _List(self, node):
        return [self.eval(e) for e in node.elts]

    def _UnaryOp(self, node):
        v = self.eval(node.operand)
        if isinstance(node.op, ast.USub):
            return -v if not isinstance(v, tuple) else tuple(-c for c in v)
        if isinstance(node.op, ast.UAdd):
            return v
        raise ExpressionError("unsupported unary operator")

    def _BinOp(self, node):
        a, b = self.eval(node.left), self.eval(node.right)
        if isinstance(node.op, ast.Div) and isinstance(b, Number):
            return a * (1.0 / b)
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ExpressionError("unsupported binary operator")
        try:
            return op(a, b)
        except (TypeError, ValueError) as exc:
            raise ExpressionError(f"cannot combine {type(a).__name__} and {type(b).__name__}: {exc}") from exc

    def _Name(self, node):
        if node.id == "unit":
            return self.algebra.unit()
        if node.id == "zero":
            return self.algebra.zero()
        if node.id == "k":
            return self.k
        raise ExpressionError(f"unknown name {node.id!r}")

    def _Call(self, node):
        if not isinstance(node.func, ast.Name) or node.keywords:
            raise ExpressionError("only plain function calls are allowed")
        name = node.func.id
        args = [self.eval(a) for a in node.args]
        handler = getattr(self, "call_" + name, None)
        if handler is None:
            raise ExpressionError(f"unknown function {name!r}")
        return handler(*args)

    def _group(self):
        if self.approx is None:
            raise ExpressionError("group algebra expressions need a Følner system")
        return self.approx.group

    def call_delta(self, s):
        try:
            return delta(self._group(), s)
        except ValueError as exc:
            raise ExpressionError(str(exc)) from exc

    def call_star(self, a):
        if not isinstance(a, GroupAlgebraElement):
            raise ExpressionError("star() takes a group algebra element")
        return involute(a)

    def call_psi(self, stage, a):
        if self.approx is None:
            raise ExpressionError("psi() needs a Følner system")
        if stage != self.k:
            raise ExpressionError(f"psi({stage}, ...) used where a stage-{self.k} element is required")
        if not isinstance(a, GroupAlgebraElement):
            raise ExpressionError("psi() takes a group algebra element")
        return self.approx.psi(self.k, a)

    def call_e(self, *args):
        try:
            if self.approx is not None and len(args) == 2:
                return self.approx.matrix_unit(self.k, *args)
            if len(args) == 2:
                return self.algebra.matrix_unit(int(args[0]), int(args[1]))
            if len(args) == 3:
                return self.algebra.matrix_unit(int(args[1]), int(args[2]), int(args[0]))
        except (KeyError, IndexError, ValueError) as exc:
            raise ExpressionError(f"no matrix unit e{args} at stage {self.k}") from exc
        raise ExpressionError("e() takes (g, h) or (block, i, j)")

    def call_random(self, seed=None):
        seed = self.seed if seed is None else int(seed)
        return self.algebra.random(np.random.default_rng(seed))

    def call_adj(self, x):
        if isinstance(x, AlgElement):
            return x.adjoint()
        raise ExpressionError("adj() takes a stage element")

    def call_amp(self, x, pattern):
        if not isinstance(x, AlgElement):
            raise ExpressionError("amp() takes a stage element")
        p = np.asarray(pattern, dtype=complex)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ExpressionError("amp() pattern must be a square array")
        return amplify_elem(x, p.shape[0], p)

    def call_matrix(self, rows):
        if not all(isinstance(e, AlgElement) for row in rows for e in row):
            raise ExpressionError("matrix() entries must be stage elements")
        return from_entries(rows)


def _parse(text: str):
    try:
        return ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from exc


def parse_element(text: str, sysc, k: int, approx=None, seed: int = 0) -> AlgElement:
    """Evaluate a stage-k element descriptor."""
    if not 0 <= k <= sysc.top:
        raise ExpressionError(f"stage {k} outside 0..{sysc.top}")
    value = _Evaluator(sysc, k, approx, seed).eval(_parse(text))
    if not isinstance(value, AlgElement):
        raise ExpressionError(f"{text!r} does not describe a stage element")
    return value


def parse_group_element(text: str, approx, seed: int = 0) -> GroupAlgebraElement:
    """Evaluate a group algebra descriptor such as ``delta(1) + delta(-1)``."""
    ev = _Evaluator(approx.cpc if approx._cpc is not None else None, 0, approx, seed)
    value = ev.eval(_parse(text))
    if not isinstance(value, GroupAlgebraElement):
        raise ExpressionError(f"{text!r} does not describe a group algebra element")
    return value
