"""Scalar expressions of a vector variable: parsing, evaluation, exact gradients.

Expressions are parsed once into an immutable AST and evaluated as parsed
(no simplification pass), so repeated evaluation at the same point is
bit-for-bit reproducible.  Gradients are computed by forward-mode dual
arithmetic: every node propagates a value together with one tangent per
coordinate, seeded with the canonical basis.  This is exact differentiation,
not finite differencing.

Grammar (infix, whitespace insensitive)::

    expr   :=  term  (('+' | '-') term)*
    term   :=  unary (('*' | '/') unary)*
    unary  :=  ('-' | '+') unary | power
    power  :=  atom ['^' signed-number]
    atom   :=  number | 'x'<k> | 'exp' '(' expr ')' | 'ln' '(' expr ')'
             | '(' expr ')'

Variables are written ``x1 .. xn`` (1-based in the source text, index ``k-1``
internally).  Exponents must be numeric literals, which keeps powers totally
differentiable and avoids complex-valued branches.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

__all__ = [
    "Expr",
    "ExprError",
    "ExprSyntaxError",
    "VariableRangeError",
    "DomainError",
    "parse",
]


class ExprError(ValueError):
    """Base class for expression failures."""


class ExprSyntaxError(ExprError):
    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class VariableRangeError(ExprError):
    """Variable index outside the declared dimension."""


class DomainError(ExprError):
    """Evaluation left the mathematical domain (ln of nonpositive value,
    division by zero, fractional power of a negative base)."""


# ---------------------------------------------------------------------------
# AST nodes.  Each node evaluates to (value, tangents) where tangents is a
# tuple with one entry per coordinate, or None when only the value is needed.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Node:
    __slots__ = ()


@dataclass(frozen=True)
class Const(_Node):
    value: float

    def _eval(self, xs, seeds):
        return self.value, (None if seeds is None else _ZEROS[len(xs)])

    def _render(self, prec):
        s = repr(self.value)
        return f"({s})" if self.value < 0 and prec > _P_ADD else s


@dataclass(frozen=True)
class Var(_Node):
    index: int

    def _eval(self, xs, seeds):
        return xs[self.index], (None if seeds is None else seeds[self.index])

    def _render(self, prec):
        return f"x{self.index + 1}"


@dataclass(frozen=True)
class Add(_Node):
    lhs: _Node
    rhs: _Node

    def _eval(self, xs, seeds):
        a, ta = self.lhs._eval(xs, seeds)
        b, tb = self.rhs._eval(xs, seeds)
        if seeds is None:
            return a + b, None
        return a + b, tuple(u + v for u, v in zip(ta, tb))

    def _render(self, prec):
        # right operand one level tighter so tree shape survives reparsing
        s = f"{self.lhs._render(_P_ADD)} + {self.rhs._render(_P_ADD + 1)}"
        return f"({s})" if prec > _P_ADD else s


@dataclass(frozen=True)
class Sub(_Node):
    lhs: _Node
    rhs: _Node

    def _eval(self, xs, seeds):
        a, ta = self.lhs._eval(xs, seeds)
        b, tb = self.rhs._eval(xs, seeds)
        if seeds is None:
            return a - b, None
        return a - b, tuple(u - v for u, v in zip(ta, tb))

    def _render(self, prec):
        # right operand needs one level more to keep a - (b - c) unambiguous
        s = f"{self.lhs._render(_P_ADD)} - {self.rhs._render(_P_ADD + 1)}"
        return f"({s})" if prec > _P_ADD else s


@dataclass(frozen=True)
class Mul(_Node):
    lhs: _Node
    rhs: _Node

    def _eval(self, xs, seeds):
        a, ta = self.lhs._eval(xs, seeds)
        b, tb = self.rhs._eval(xs, seeds)
        if seeds is None:
            return a * b, None
        return a * b, tuple(a * v + b * u for u, v in zip(ta, tb))

    def _render(self, prec):
        s = f"{self.lhs._render(_P_MUL)}*{self.rhs._render(_P_MUL + 1)}"
        return f"({s})" if prec > _P_MUL else s


@dataclass(frozen=True)
class Div(_Node):
    lhs: _Node
    rhs: _Node

    def _eval(self, xs, seeds):
        a, ta = self.lhs._eval(xs, seeds)
        b, tb = self.rhs._eval(xs, seeds)
        if b == 0.0:
            raise DomainError("division by zero")
        val = a / b
        if seeds is None:
            return val, None
        return val, tuple((u - val * v) / b for u, v in zip(ta, tb))

    def _render(self, prec):
        s = f"{self.lhs._render(_P_MUL)}/{self.rhs._render(_P_MUL + 1)}"
        return f"({s})" if prec > _P_MUL else s


@dataclass(frozen=True)
class Neg(_Node):
    operand: _Node

    def _eval(self, xs, seeds):
        a, ta = self.operand._eval(xs, seeds)
        if seeds is None:
            return -a, None
        return -a, tuple(-u for u in ta)

    def _render(self, prec):
        s = f"-{self.operand._render(_P_NEG)}"
        return f"({s})" if prec > _P_NEG else s


@dataclass(frozen=True)
class Pow(_Node):
    base: _Node
    exponent: float

    def _eval(self, xs, seeds):
        a, ta = self.base._eval(xs, seeds)
        k = self.exponent
        integral = k == int(k)
        if a < 0.0 and not integral:
            raise DomainError(f"negative base {a!r} with fractional exponent {k!r}")
        if a == 0.0 and k < 0.0:
            raise DomainError(f"zero base with negative exponent {k!r}")
        val = a ** k
        if seeds is None:
            return val, None
        if a == 0.0 and k < 1.0 and k != 0.0:
            raise DomainError(f"derivative of x^{k!r} undefined at 0")
        dcoef = 0.0 if k == 0.0 else k * a ** (k - 1.0)
        return val, tuple(dcoef * u for u in ta)

    def _render(self, prec):
        s = f"{self.base._render(_P_POW + 1)}^{self.exponent!r}"
        return f"({s})" if prec > _P_POW else s


@dataclass(frozen=True)
class Exp(_Node):
    operand: _Node

    def _eval(self, xs, seeds):
        a, ta = self.operand._eval(xs, seeds)
        try:
            val = math.exp(a)
        except OverflowError:
            val = math.inf
        if seeds is None:
            return val, None
        return val, tuple(val * u for u in ta)

    def _render(self, prec):
        return f"exp({self.operand._render(0)})"


@dataclass(frozen=True)
class Ln(_Node):
    operand: _Node

    def _eval(self, xs, seeds):
        a, ta = self.operand._eval(xs, seeds)
        if a <= 0.0:
            raise DomainError(f"ln of nonpositive value {a!r}")
        val = math.log(a)
        if seeds is None:
            return val, None
        return val, tuple(u / a for u in ta)

    def _render(self, prec):
        return f"ln({self.operand._render(0)})"


# rendering precedence levels
_P_ADD, _P_MUL, _P_NEG, _P_POW = 1, 2, 3, 4

# shared zero-tangent tuples and basis seeds, cached per dimension
_ZEROS: dict[int, tuple] = {}
_BASIS: dict[int, tuple] = {}


def _basis(n):
    try:
        return _BASIS[n]
    except KeyError:
        rows = tuple(
            tuple(1.0 if i == k else 0.0 for i in range(n)) for k in range(n)
        )
        _BASIS[n] = rows
        _ZEROS[n] = tuple(0.0 for _ in range(n))
        return rows


class Expr:
    """A parsed scalar function of ``n`` variables.

    Immutable after construction; safe to evaluate concurrently.
    """

    __slots__ = ("root", "n", "_text")

    def __init__(self, root, n):
        self.root = root
        self.n = n
        self._text = root._render(0)
        _basis(n)

    def value(self, x) -> float:
        """Evaluate at ``x`` (sequence of length n)."""
        xs = self._coerce(x)
        v, _ = self.root._eval(xs, None)
        return v

    def value_and_grad(self, x):
        """Evaluate value and full gradient in a single forward pass."""
        xs = self._coerce(x)
        v, t = self.root._eval(xs, _basis(self.n))
        return v, t

    def grad(self, x):
        """Gradient at ``x`` as a tuple of length n."""
        return self.value_and_grad(x)[1]

    def _coerce(self, x):
        xs = tuple(float(v) for v in x)
        if len(xs) != self.n:
            raise ExprError(f"expected a point of dimension {self.n}, got {len(xs)}")
        return xs

    def __str__(self):
        return self._text

    def __repr__(self):
        return f"Expr({self._text!r}, n={self.n})"

    def __eq__(self, other):
        return (
            isinstance(other, Expr) and self.n == other.n and self.root == other.root
        )

    def __hash__(self):
        return hash((self.root, self.n))


# ---------------------------------------------------------------------------
# Tokenizer / recursive-descent parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            # skip leading whitespace manually to report a useful position
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise ExprSyntaxError(f"unexpected character {text[at]!r}", at)
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens, n):
        self.tokens = tokens
        self.i = 0
        self.n = n

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ExprSyntaxError(f"expected {op!r}", pos)
        self.advance()

    def parse_expr(self):
        node = self.parse_term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.parse_term()
                node = Add(node, rhs) if val == "+" else Sub(node, rhs)
            else:
                return node

    def parse_term(self):
        node = self.parse_unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.parse_unary()
                node = Mul(node, rhs) if val == "*" else Div(node, rhs)
            else:
                return node

    def parse_unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.parse_unary())
        if kind == "op" and val == "+":
            self.advance()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return Pow(base, self.parse_exponent())
        return base

    def parse_exponent(self):
        # exponents are literal numbers, optionally signed
        kind, val, pos = self.peek()
        sign = 1.0
        if kind == "op" and val in "+-":
            sign = -1.0 if val == "-" else 1.0
            self.advance()
            kind, val, pos = self.peek()
        if kind != "num":
            raise ExprSyntaxError("exponent must be a numeric literal", pos)
        self.advance()
        return sign * val

    def parse_atom(self):
        kind, val, pos = self.advance()
        if kind == "num":
            return Const(val)
        if kind == "op" and val == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        if kind == "ident":
            if val in ("exp", "ln"):
                self.expect_op("(")
                arg = self.parse_expr()
                self.expect_op(")")
                return Exp(arg) if val == "exp" else Ln(arg)
            m = re.fullmatch(r"x(\d+)", val)
            if m is None:
                raise ExprSyntaxError(f"unknown identifier {val!r}", pos)
            k = int(m.group(1))
            if not 1 <= k <= self.n:
                raise VariableRangeError(
                    f"variable x{k} out of range for dimension n={self.n}"
                )
            return Var(k - 1)
        raise ExprSyntaxError(f"unexpected token {val!r}", pos)


def parse(text: str, n: int) -> Expr:
    """Parse ``text`` as a scalar function of ``x1 .. xn``.

    Raises ExprSyntaxError with a character position on malformed input and
    VariableRangeError when a variable index exceeds ``n``.
    """
    if n < 1:
        raise ExprError(f"dimension must be positive, got {n}")
    parser = _Parser(_tokenize(text), n)
    root = parser.parse_expr()
    kind, val, pos = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"trailing input {val!r}", pos)
    return Expr(root, n)
