"""Scalar expressions in chart coordinates.

Grammar (ASCII, whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := '-' factor | primary ('^' exponent)?
    primary := number | 'x' digits | func '(' expr ')' | '(' expr ')'
    exponent:= ['-'] number | '(' ['-'] number ')'
    func    := 'sin' | 'cos' | 'exp' | 'sqrt' | 'ln'

``^`` binds tighter than unary minus, so ``-x1^2`` is ``-(x1^2)``.
Exponents must be numeric constants.

Every expression can be evaluated to a float (:func:`evaluate`) or to a
:class:`Dual` carrying the exact gradient (:func:`eval_dual`).  Points may be a
single coordinate vector of shape ``(n,)`` or a batch of shape ``(P, n)``; the
results then carry the matching leading batch axis.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "ln")


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the domain of a node (pole, negative sqrt, ...)."""

    def __init__(self, message: str, node: "Expr"):
        self.node = node
        super().__init__(f"{message} in '{node}'")


# ---------------------------------------------------------------- AST nodes


def _coerced(method):
    """Convert the right operand to Expr; defer to it if that is impossible."""

    def wrapper(self, other):
        if not isinstance(other, (Expr, int, float, np.floating, np.integer)):
            return NotImplemented
        return method(self, other)

    wrapper.__name__ = method.__name__
    return wrapper


class Expr:
    """Immutable expression node.  Arithmetic operators build new trees."""

    __slots__ = ()

    @_coerced
    def __add__(self, other):
        other = as_expr(other)
        if _is_const(other, 0.0):
            return self
        if _is_const(self, 0.0):
            return other
        if isinstance(self, Const) and isinstance(other, Const):
            return Const(self.value + other.value)
        return Binary("+", self, other)

    @_coerced
    def __radd__(self, other):
        return as_expr(other) + self

    @_coerced
    def __sub__(self, other):
        other = as_expr(other)
        if _is_const(other, 0.0):
            return self
        if isinstance(self, Const) and isinstance(other, Const):
            return Const(self.value - other.value)
        if _is_const(self, 0.0):
            return -other
        return Binary("-", self, other)

    @_coerced
    def __rsub__(self, other):
        return as_expr(other) - self

    @_coerced
    def __mul__(self, other):
        other = as_expr(other)
        if _is_const(self, 0.0) or _is_const(other, 0.0):
            return Const(0.0)
        if _is_const(self, 1.0):
            return other
        if _is_const(other, 1.0):
            return self
        if isinstance(self, Const) and isinstance(other, Const):
            return Const(self.value * other.value)
        return Binary("*", self, other)

    @_coerced
    def __rmul__(self, other):
        return as_expr(other) * self

    @_coerced
    def __truediv__(self, other):
        other = as_expr(other)
        if _is_const(other, 1.0):
            return self
        return Binary("/", self, other)

    @_coerced
    def __rtruediv__(self, other):
        return as_expr(other) / self

    def __neg__(self):
        if isinstance(self, Const):
            return Const(-self.value)
        return Unary("neg", self)

    def __pow__(self, exponent):
        return Pow(self, float(exponent))

    def __str__(self):
        return to_string(self)

    @property
    def is_zero(self) -> bool:
        return _is_const(self, 0.0)

    def max_coord(self) -> int:
        """Largest coordinate index used (0 for a constant)."""
        return _max_coord(self)


@dataclass(frozen=True, eq=True, repr=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, eq=True, repr=True)
class Coord(Expr):
    index: int  # 1-based


@dataclass(frozen=True, eq=True, repr=True)
class Unary(Expr):
    op: str  # neg | sin | cos | exp | sqrt | ln
    arg: Expr


@dataclass(frozen=True, eq=True, repr=True)
class Binary(Expr):
    op: str  # + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True, repr=True)
class Pow(Expr):
    base: Expr
    exponent: float


def _is_const(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _max_coord(e: Expr) -> int:
    if isinstance(e, Coord):
        return e.index
    if isinstance(e, Const):
        return 0
    if isinstance(e, Unary):
        return _max_coord(e.arg)
    if isinstance(e, Pow):
        return _max_coord(e.base)
    return max(_max_coord(e.left), _max_coord(e.right))


def x(k: int) -> Coord:
    """Coordinate function x^k (1-based)."""
    return Coord(k)


# ---------------------------------------------------------------- printing


def _num(v: float) -> str:
    return repr(float(v))


def to_string(e: Expr) -> str:
    """Render ``e`` in the DSL; the output reparses to an identical tree.

    Negated literals are folded into constants, as the arithmetic operators do.
    """
    if isinstance(e, Const):
        if np.signbit(e.value):
            return f"(-{_num(-e.value)})"
        return _num(e.value)
    if isinstance(e, Coord):
        return f"x{e.index}"
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{_wrap_atom(e.arg)})"
        return f"{e.op}({to_string(e.arg)})"
    if isinstance(e, Pow):
        return f"{_wrap_atom(e.base)}^{_num(e.exponent)}"
    return f"({to_string(e.left)} {e.op} {to_string(e.right)})"


def _wrap_atom(e: Expr) -> str:
    s = to_string(e)
    if isinstance(e, Pow) or (isinstance(e, Const) and e.value >= 0 and "e" in s):
        return f"({s})"
    return s


# ---------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    text_len = len(text)
    while pos < text_len:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos), text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        shown = tok[1] if tok[0] != "end" else "end of input"
        raise ExprSyntaxError(f"{message} (found {shown!r})", _byte_offset(self.text, tok[2]), self.text)

    def expect(self, value):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != value:
            self.error(f"expected {value!r}")
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            self.error("unexpected token")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            left = Binary(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            left = Binary(op, left, self.factor())
        return left

    def factor(self) -> Expr:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            operand = self.factor()
            if isinstance(operand, Const):
                return Const(-operand.value)
            return Unary("neg", operand)
        base = self.primary()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.advance()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> float:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "(":
            self.advance()
            value = self.signed_number()
            self.expect(")")
            return value
        return self.signed_number()

    def signed_number(self) -> float:
        sign = 1.0
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            sign = -1.0
        tok = self.peek()
        if tok[0] != "num":
            self.error("exponent must be a numeric constant")
        self.advance()
        return sign * float(tok[1])

    def primary(self) -> Expr:
        tok = self.peek()
        kind, value, _ = tok
        if kind == "num":
            self.advance()
            return Const(float(value))
        if kind == "name":
            self.advance()
            if re.fullmatch(r"x\d+", value):
                k = int(value[1:])
                if not 1 <= k <= self.dim:
                    raise ExprSyntaxError(
                        f"coordinate {value} out of range 1..{self.dim}",
                        _byte_offset(self.text, tok[2]), self.text)
                return Coord(k)
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(value, arg)
            raise ExprSyntaxError(f"unknown identifier {value!r}", _byte_offset(self.text, tok[2]), self.text)
        if kind == "op" and value == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.error("expected a number, coordinate, function or '('")


def parse(text: str, dim: int) -> Expr:
    """Parse ``text`` into an expression over coordinates ``x1..x<dim>``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return _Parser(text, dim).parse()


# ---------------------------------------------------------------- dual numbers


class Dual:
    """Value plus dense gradient; arrays broadcast over a leading batch axis.

    ``value`` has shape ``batch`` and ``partials`` has shape ``batch + (n,)``.
    """

    __slots__ = ("value", "partials")

    def __init__(self, value, partials):
        self.value = value
        self.partials = partials

    @classmethod
    def constant(cls, c, n: int, batch=()):
        return cls(np.full(batch, float(c)), np.zeros(tuple(batch) + (n,)))

    @classmethod
    def variable(cls, values, k: int, n: int):
        """Coordinate x^k (1-based) at ``values``."""
        values = np.asarray(values, dtype=float)
        partials = np.zeros(values.shape + (n,))
        partials[..., k - 1] = 1.0
        return cls(values, partials)

    @property
    def n(self) -> int:
        return self.partials.shape[-1]

    def _lift(self, other) -> "Dual":
        if isinstance(other, Dual):
            return other
        return Dual(np.asarray(float(other)), np.zeros(self.n))

    def __add__(self, other):
        other = self._lift(other)
        return Dual(self.value + other.value, self.partials + other.partials)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        return Dual(self.value - other.value, self.partials - other.partials)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return Dual(-self.value, -self.partials)

    def __mul__(self, other):
        other = self._lift(other)
        v = np.asarray(self.value)[..., None]
        w = np.asarray(other.value)[..., None]
        return Dual(self.value * other.value, v * other.partials + w * self.partials)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        q = self.value / other.value
        w = np.asarray(other.value)[..., None]
        return Dual(q, (self.partials - np.asarray(q)[..., None] * other.partials) / w)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, c: float):
        c = float(c)
        if c == 0.0:
            return Dual(np.ones_like(self.value), np.zeros_like(self.partials))
        if c == 1.0:
            return self
        v = self.value
        return Dual(v ** c, (c * v ** (c - 1.0))[..., None] * self.partials)

    def _chain(self, f, df):
        return Dual(f, np.asarray(df)[..., None] * self.partials)

    def sin(self):
        return self._chain(np.sin(self.value), np.cos(self.value))

    def cos(self):
        return self._chain(np.cos(self.value), -np.sin(self.value))

    def exp(self):
        e = np.exp(self.value)
        return self._chain(e, e)

    def sqrt(self):
        s = np.sqrt(self.value)
        return self._chain(s, 0.5 / s)

    def ln(self):
        return self._chain(np.log(self.value), 1.0 / self.value)

    def __repr__(self):
        return f"Dual(value={self.value!r}, partials={self.partials!r})"


# ---------------------------------------------------------------- evaluation


def as_points(p, dim: int | None = None) -> np.ndarray:
    """Coerce to a float array of shape (n,) or (P, n); checks finiteness."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim > 2:
        raise ValueError("points must have shape (n,) or (P, n)")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must be finite")
    if dim is not None and arr.shape[-1] != dim:
        raise ValueError(f"point dimension {arr.shape[-1]} does not match chart dimension {dim}")
    return arr


def _check_domain(cond, message, node):
    if np.any(cond):
        raise DomainError(message, node)


def _value(e: Expr, pts: np.ndarray):
    if isinstance(e, Const):
        return np.full(pts.shape[:-1], e.value)
    if isinstance(e, Coord):
        if e.index > pts.shape[-1]:
            raise ExprError(f"coordinate x{e.index} outside chart of dimension {pts.shape[-1]}")
        return pts[..., e.index - 1]
    if isinstance(e, Unary):
        a = _value(e.arg, pts)
        if e.op == "neg":
            return -a
        if e.op == "sin":
            return np.sin(a)
        if e.op == "cos":
            return np.cos(a)
        if e.op == "exp":
            return np.exp(a)
        if e.op == "sqrt":
            _check_domain(a < 0, "square root of a negative number", e)
            return np.sqrt(a)
        if e.op == "ln":
            _check_domain(a <= 0, "logarithm of a non-positive number", e)
            return np.log(a)
        raise ExprError(f"unknown unary op {e.op}")
    if isinstance(e, Pow):
        b = _value(e.base, pts)
        _check_pow_domain(b, e, dual=False)
        return b ** e.exponent
    a = _value(e.left, pts)
    b = _value(e.right, pts)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    _check_domain(b == 0, "division by zero", e)
    return a / b


def _check_pow_domain(b, e: Pow, dual: bool):
    c = e.exponent
    if c != int(c):
        _check_domain(b < 0, "non-integer power of a negative number", e)
        if dual and c < 1:
            _check_domain(b == 0, "non-differentiable power at zero", e)
    if c < 0:
        _check_domain(b == 0, "negative power of zero", e)


def _dual(e: Expr, pts: np.ndarray, n: int) -> Dual:
    batch = pts.shape[:-1]
    if isinstance(e, Const):
        return Dual.constant(e.value, n, batch)
    if isinstance(e, Coord):
        if e.index > n:
            raise ExprError(f"coordinate x{e.index} outside chart of dimension {n}")
        return Dual.variable(pts[..., e.index - 1], e.index, n)
    if isinstance(e, Unary):
        a = _dual(e.arg, pts, n)
        if e.op == "neg":
            return -a
        if e.op == "sqrt":
            _check_domain(a.value <= 0, "square root at a non-positive number", e)
        if e.op == "ln":
            _check_domain(a.value <= 0, "logarithm of a non-positive number", e)
        return getattr(a, e.op)()
    if isinstance(e, Pow):
        b = _dual(e.base, pts, n)
        _check_pow_domain(b.value, e, dual=True)
        return b ** e.exponent
    a = _dual(e.left, pts, n)
    b = _dual(e.right, pts, n)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    _check_domain(b.value == 0, "division by zero", e)
    return a / b


def evaluate(e: Expr, p):
    """Value of ``e`` at a point (float) or at a batch of points (array)."""
    pts = as_points(p)
    out = _value(e, pts)
    if pts.ndim == 1:
        return float(out)
    return np.asarray(out, dtype=float)


def eval_dual(e: Expr, p) -> Dual:
    """Value and exact gradient of ``e`` at ``p``."""
    pts = as_points(p)
    return _dual(e, pts, pts.shape[-1])


def grad_fd(e: Expr, p, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient; the test oracle for :func:`eval_dual`."""
    if h <= 0:
        raise ValueError("step must be positive")
    pts = as_points(p)
    n = pts.shape[-1]
    grad = np.empty(pts.shape)
    for k in range(n):
        step = np.zeros(n)
        step[k] = h
        grad[..., k] = (_value(e, pts + step) - _value(e, pts - step)) / (2.0 * h)
    return grad


Number = Union[int, float]


def constant(c: Number) -> Const:
    return Const(float(c))


def sin(e: Expr) -> Expr:
    return Unary("sin", as_expr(e))


def cos(e: Expr) -> Expr:
    return Unary("cos", as_expr(e))


def exp(e: Expr) -> Expr:
    return Unary("exp", as_expr(e))


def sqrt(e: Expr) -> Expr:
    return Unary("sqrt", as_expr(e))


def ln(e: Expr) -> Expr:
    return Unary("ln", as_expr(e))


def is_constant(e: Expr) -> bool:
    return _max_coord(e) == 0


def polynomial(terms, dim: int) -> Expr:
    """Build sum(c * prod x_k^a_k) from ``[(c, (a_1, ..., a_n)), ...]``."""
    out: Expr = Const(0.0)
    for coeff, powers in terms:
        if len(powers) != dim:
            raise ValueError("monomial exponent vector has wrong length")
        mono: Expr = Const(float(coeff))
        for k, a in enumerate(powers, start=1):
            if a == 1:
                mono = mono * Coord(k)
            elif a > 1:
                mono = mono * Pow(Coord(k), float(a))
        out = out + mono
    return out


__all__ = [
    "Expr", "Const", "Coord", "Unary", "Binary", "Pow", "Dual",
    "ExprError", "ExprSyntaxError", "DomainError",
    "parse", "evaluate", "eval_dual", "grad_fd", "to_string", "as_expr", "as_points",
    "x", "constant", "sin", "cos", "exp", "sqrt", "ln", "polynomial", "is_constant",
    "FUNCTIONS",
]
