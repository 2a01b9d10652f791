"""Parse, evaluate and symbolically differentiate closed-form radial profiles.

The metric families are declared in config files as infix expression strings
over a radial (or spatial) variable, e.g. ``"1 + m/(2*r)"``.  This module
turns those strings into immutable expression trees that support exact
symbolic differentiation, so curvature and asymptotic formulas downstream are
built from exact derivatives instead of finite differences.

Grammar (``^`` binds tighter than unary minus and is right-associative)::

    expr   := term   (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

Known unary functions: ``exp``, ``log``, ``sqrt``, ``abs``.  Named parameters
are substituted as constants at parse time; evaluation only ever sees the
declared variables.  There is deliberately no simplifier beyond constant
folding: derivative trees may be large, correctness over beauty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "Expr",
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ExprArityError",
    "ExprDomainError",
    "parse",
]

_FUNCTIONS = ("exp", "log", "sqrt", "abs")
_BINOPS = ("add", "sub", "mul", "div", "pow")


class ExprError(Exception):
    """Base class for expression engine errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} (at offset {offset})")
        self.name = name
        self.offset = offset


class ExprArityError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ExprDomainError(ExprError):
    """Raised when evaluation leaves the real domain; carries the subtree."""

    def __init__(self, message: str, subtree: "Expr"):
        super().__init__(f"{message} in {subtree}")
        self.subtree = subtree


# ---------------------------------------------------------------------------
# Tree nodes.  Plain tuples keep construction cheap: ("num", v), ("var", name),
# ("neg"|"exp"|"log"|"sqrt"|"abs", child), (binop, left, right).
# ---------------------------------------------------------------------------


def _is_num(node) -> bool:
    return node[0] == "num"


def _num(v: float):
    v = float(v)
    if not math.isfinite(v):
        raise ExprError(f"non-finite constant {v!r}")
    return ("num", v)


def _fold_unary(op: str, a):
    if _is_num(a):
        x = a[1]
        try:
            if op == "neg":
                return _num(-x)
            if op == "exp":
                return _num(math.exp(x))
            if op == "log":
                if x <= 0.0:
                    raise ValueError
                return _num(math.log(x))
            if op == "sqrt":
                if x < 0.0:
                    raise ValueError
                return _num(math.sqrt(x))
            if op == "abs":
                return _num(abs(x))
        except (ValueError, OverflowError):
            pass  # leave the node symbolic, error surfaces at eval time
    return (op, a)


def _fold_binary(op: str, a, b):
    if _is_num(a) and _is_num(b):
        x, y = a[1], b[1]
        try:
            if op == "add":
                return _num(x + y)
            if op == "sub":
                return _num(x - y)
            if op == "mul":
                return _num(x * y)
            if op == "div":
                if y == 0.0:
                    raise ValueError
                return _num(x / y)
            if op == "pow":
                return _num(x**y)
        except (ValueError, OverflowError, ZeroDivisionError):
            pass
    # algebraic identities used by the differentiator to keep trees small
    if op == "add":
        if _is_num(a) and a[1] == 0.0:
            return b
        if _is_num(b) and b[1] == 0.0:
            return a
    elif op == "sub":
        if _is_num(b) and b[1] == 0.0:
            return a
        if _is_num(a) and a[1] == 0.0:
            return _fold_unary("neg", b)
    elif op == "mul":
        if _is_num(a):
            if a[1] == 0.0:
                return _num(0.0)
            if a[1] == 1.0:
                return b
        if _is_num(b):
            if b[1] == 0.0:
                return _num(0.0)
            if b[1] == 1.0:
                return a
    elif op == "div":
        if _is_num(a) and a[1] == 0.0:
            return _num(0.0)
        if _is_num(b) and b[1] == 1.0:
            return a
    elif op == "pow":
        if _is_num(b):
            if b[1] == 1.0:
                return a
            if b[1] == 0.0:
                return _num(1.0)
    return (op, a, b)


# ---------------------------------------------------------------------------
# Expr: immutable wrapper with evaluation, differentiation and printing.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Expr:
    """Immutable expression over a declared variable set.

    Safe for concurrent evaluation: the tree is never mutated after
    construction and the compiled evaluator closes over constants only.
    """

    root: tuple
    variables: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "_compiled", _compile(self.root, self))

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def number(v: float) -> "Expr":
        return Expr(_num(v), frozenset())

    @staticmethod
    def variable(name: str) -> "Expr":
        return Expr(("var", name), frozenset({name}))

    def _combine(self, other, op: str) -> "Expr":
        if not isinstance(other, Expr):
            other = Expr.number(other)
        return Expr(_fold_binary(op, self.root, other.root), self.variables | other.variables)

    def __add__(self, other):
        return self._combine(other, "add")

    def __radd__(self, other):
        return Expr.number(other)._combine(self, "add")

    def __sub__(self, other):
        return self._combine(other, "sub")

    def __rsub__(self, other):
        return Expr.number(other)._combine(self, "sub")

    def __mul__(self, other):
        return self._combine(other, "mul")

    def __rmul__(self, other):
        return Expr.number(other)._combine(self, "mul")

    def __truediv__(self, other):
        return self._combine(other, "div")

    def __rtruediv__(self, other):
        return Expr.number(other)._combine(self, "div")

    def __pow__(self, other):
        return self._combine(other, "pow")

    def __neg__(self):
        return Expr(_fold_unary("neg", self.root), self.variables)

    def sqrt(self) -> "Expr":
        return Expr(_fold_unary("sqrt", self.root), self.variables)

    # -- evaluation ----------------------------------------------------------

    def __call__(self, **env):
        return self.evaluate(env)

    def evaluate(self, env: Mapping[str, float | np.ndarray]):
        """IEEE double evaluation; raises ExprDomainError instead of NaN."""
        missing = self.variables - set(env)
        if missing:
            raise ExprError(f"unbound variables: {sorted(missing)}")
        return self._compiled(env)

    # -- calculus ------------------------------------------------------------

    def diff(self, var: str) -> "Expr":
        """Exact symbolic derivative with constant folding only."""
        return Expr(_diff(self.root, var), self.variables)

    # -- printing ------------------------------------------------------------

    def __str__(self) -> str:
        return _to_str(self.root)

    def __repr__(self) -> str:
        return f"Expr({_to_str(self.root)!r})"


def _diff(node, var: str):
    op = node[0]
    if op == "num":
        return _num(0.0)
    if op == "var":
        return _num(1.0 if node[1] == var else 0.0)
    if op == "neg":
        return _fold_unary("neg", _diff(node[1], var))
    if op == "exp":
        return _fold_binary("mul", node, _diff(node[1], var))
    if op == "log":
        return _fold_binary("div", _diff(node[1], var), node[1])
    if op == "sqrt":
        return _fold_binary("div", _diff(node[1], var), _fold_binary("mul", _num(2.0), node))
    if op == "abs":
        # d|u| = u/|u| * u', left as an eval-time domain error at u = 0
        sign = _fold_binary("div", node[1], node)
        return _fold_binary("mul", sign, _diff(node[1], var))
    a, b = node[1], node[2]
    da, db = _diff(a, var), _diff(b, var)
    if op == "add":
        return _fold_binary("add", da, db)
    if op == "sub":
        return _fold_binary("sub", da, db)
    if op == "mul":
        return _fold_binary("add", _fold_binary("mul", da, b), _fold_binary("mul", a, db))
    if op == "div":
        num = _fold_binary("sub", _fold_binary("mul", da, b), _fold_binary("mul", a, db))
        return _fold_binary("div", num, _fold_binary("mul", b, b))
    if op == "pow":
        if _is_num(b):
            k = b[1]
            inner = _fold_binary("mul", _num(k), _fold_binary("pow", a, _num(k - 1.0)))
            return _fold_binary("mul", inner, da)
        # general a^b = exp(b log a)
        term1 = _fold_binary("mul", db, _fold_unary("log", a))
        term2 = _fold_binary("div", _fold_binary("mul", b, da), a)
        return _fold_binary("mul", node, _fold_binary("add", term1, term2))
    raise ExprError(f"unknown node {op!r}")


def _to_str(node) -> str:
    op = node[0]
    if op == "num":
        v = node[1]
        return repr(v) if v >= 0 else f"(-{-v!r})"
    if op == "var":
        return node[1]
    if op == "neg":
        return f"(-{_to_str(node[1])})"
    if op in ("exp", "log", "sqrt", "abs"):
        return f"{op}({_to_str(node[1])})"
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}[op]
    return f"({_to_str(node[1])} {sym} {_to_str(node[2])})"


# ---------------------------------------------------------------------------
# Compilation to nested closures.  Domain checks raise instead of returning
# NaN/inf silently; the offending subtree is reported for diagnosis.
# ---------------------------------------------------------------------------


def _any_true(x) -> bool:
    return bool(np.any(x))


def _compile(node, owner: Expr) -> Callable:
    op = node[0]
    if op == "num":
        v = node[1]
        return lambda env: v
    if op == "var":
        name = node[1]
        return lambda env: env[name]

    def sub(child):
        return _compile(child, owner)

    def err(msg):
        raise ExprDomainError(msg, Expr(node, owner.variables))

    if op == "neg":
        fa = sub(node[1])
        return lambda env: -fa(env)
    if op == "exp":
        fa = sub(node[1])
        return lambda env: np.exp(fa(env))
    if op == "log":
        fa = sub(node[1])

        def f_log(env):
            x = fa(env)
            if _any_true(np.asarray(x) <= 0.0):
                err("log of non-positive argument")
            return np.log(x)

        return f_log
    if op == "sqrt":
        fa = sub(node[1])

        def f_sqrt(env):
            x = fa(env)
            if _any_true(np.asarray(x) < 0.0):
                err("sqrt of negative argument")
            return np.sqrt(x)

        return f_sqrt
    if op == "abs":
        fa = sub(node[1])
        return lambda env: np.abs(fa(env))

    fa, fb = sub(node[1]), sub(node[2])
    if op == "add":
        return lambda env: fa(env) + fb(env)
    if op == "sub":
        return lambda env: fa(env) - fb(env)
    if op == "mul":
        return lambda env: fa(env) * fb(env)
    if op == "div":

        def f_div(env):
            den = fb(env)
            if _any_true(np.asarray(den) == 0.0):
                err("division by zero")
            return fa(env) / den

        return f_div
    if op == "pow":
        if _is_num(node[2]):
            k = node[2][1]
            if k == int(k):
                ki = int(k)

                def f_ipow(env):
                    base = fa(env)
                    if ki < 0 and _any_true(np.asarray(base) == 0.0):
                        err("zero raised to negative power")
                    return base**ki

                return f_ipow

            def f_fpow(env):
                base = fa(env)
                if _any_true(np.asarray(base) < 0.0):
                    err("non-integer power of negative base")
                return base**k

            return f_fpow

        def f_pow(env):
            base, ex = fa(env), fb(env)
            if _any_true(np.asarray(base) < 0.0):
                err("non-integer power of negative base")
            if _any_true((np.asarray(base) == 0.0) & (np.asarray(ex) <= 0.0)):
                err("zero base with non-positive exponent")
            return base**ex

        return f_pow
    raise ExprError(f"unknown node {op!r}")


# ---------------------------------------------------------------------------
# Recursive descent parser.
# ---------------------------------------------------------------------------


class _Tokens:
    def __init__(self, src: str):
        self.src = src
        self.toks: list[tuple[str, str, int]] = []  # (kind, text, offset)
        self._scan()
        self.pos = 0

    def _scan(self):
        src, i, n = self.src, 0, len(self.src)
        while i < n:
            c = src[i]
            if c.isspace():
                i += 1
                continue
            if c in "+-*/^()":
                self.toks.append(("op", c, i))
                i += 1
                continue
            if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
                j = i
                while j < n and src[j].isdigit():
                    j += 1
                if j < n and src[j] == ".":
                    j += 1
                    while j < n and src[j].isdigit():
                        j += 1
                if j < n and src[j] in "eE":
                    k = j + 1
                    if k < n and src[k] in "+-":
                        k += 1
                    if k < n and src[k].isdigit():
                        j = k
                        while j < n and src[j].isdigit():
                            j += 1
                self.toks.append(("num", src[i:j], i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < n and (src[j].isalnum() or src[j] == "_"):
                    j += 1
                self.toks.append(("ident", src[i:j], i))
                i = j
                continue
            raise ExprSyntaxError(f"unexpected character {c!r}", i)
        self.toks.append(("eof", "", n))

    def peek(self):
        return self.toks[self.pos]

    def next(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t


class _Parser:
    def __init__(self, src: str, variables: frozenset[str], params: Mapping[str, float]):
        self.tk = _Tokens(src)
        self.variables = variables
        self.params = dict(params)

    def parse(self):
        node = self.expr()
        kind, text, off = self.tk.peek()
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected {text!r}", off)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, text, _ = self.tk.peek()
            if kind == "op" and text in "+-":
                self.tk.next()
                rhs = self.term()
                node = _fold_binary("add" if text == "+" else "sub", node, rhs)
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, text, _ = self.tk.peek()
            if kind == "op" and text in "*/":
                self.tk.next()
                rhs = self.factor()
                node = _fold_binary("mul" if text == "*" else "div", node, rhs)
            else:
                return node

    def factor(self):
        kind, text, _ = self.tk.peek()
        if kind == "op" and text == "-":
            self.tk.next()
            return _fold_unary("neg", self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, _ = self.tk.peek()
        if kind == "op" and text == "^":
            self.tk.next()
            # right-associative; exponent may carry its own unary minus
            return _fold_binary("pow", base, self.factor())
        return base

    def atom(self):
        kind, text, off = self.tk.next()
        if kind == "num":
            return _num(float(text))
        if kind == "ident":
            nkind, ntext, _ = self.tk.peek()
            if nkind == "op" and ntext == "(":
                if text not in _FUNCTIONS:
                    if text in self.variables or text in self.params:
                        raise ExprArityError(f"{text!r} is not callable", off)
                    raise UnknownIdentifierError(text, off)
                self.tk.next()
                arg = self.expr()
                ckind, ctext, coff = self.tk.next()
                if not (ckind == "op" and ctext == ")"):
                    raise ExprSyntaxError("expected ')'", coff)
                return _fold_unary(text, arg)
            if text in self.variables:
                return ("var", text)
            if text in self.params:
                return _num(self.params[text])
            if text in _FUNCTIONS:
                raise ExprArityError(f"function {text!r} needs an argument", off)
            raise UnknownIdentifierError(text, off)
        if kind == "op" and text == "(":
            node = self.expr()
            ckind, ctext, coff = self.tk.next()
            if not (ckind == "op" and ctext == ")"):
                raise ExprSyntaxError("expected ')'", coff)
            return node
        raise ExprSyntaxError(f"unexpected {text!r}" if text else "unexpected end of input", off)


def parse(src: str, variables, params: Mapping[str, float] | None = None) -> Expr:
    """Parse ``src`` over the given variable set, substituting params as constants.

    Raises ExprSyntaxError (with byte offset), UnknownIdentifierError or
    ExprArityError on malformed input.
    """
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", 0)
    variables = frozenset(variables)
    params = dict(params or {})
    overlap = variables & set(params)
    if overlap:
        raise ExprError(f"params shadow variables: {sorted(overlap)}")
    root = _Parser(src, variables, params).parse()
    return Expr(root, variables)
