"""Exact multivariate rational expressions over Q.

Expressions are kept in a canonical form (numerator and denominator expanded,
in lowest terms, denominator sign-normalized) so that equality of canonical
forms is syntactic.  Coefficients are arbitrary-precision rationals; no
floating point is allowed anywhere.

Symbols are owned by a :class:`Workspace` and carry a kind tag (field
variable, jet variable, parameter, unknown constant, covector component,
nonlocal variable) that the higher-level modules use for bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping

import sympy as sp
from sympy.core.sorting import default_sort_key


class ExprError(Exception):
    """Base class for expression-core errors."""


class ExprSyntaxError(ExprError):
    """Raised on malformed input text; carries the offending position."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class UnknownIdentifierError(ExprError):
    pass


class DivisionByZeroError(ExprError):
    pass


class SymbolKind(Enum):
    FIELD = "field-variable"
    JET = "jet-variable"
    PARAMETER = "parameter"
    UNKNOWN = "unknown-constant"
    COVECTOR = "covector-component"
    NONLOCAL = "nonlocal-variable"


@dataclass(frozen=True)
class Symbol:
    """A named symbol with an immutable kind.

    ``meta`` holds kind-specific data:
      JET       -> (field name, order >= 1)
      COVECTOR  -> (argument index, field index, order)
      NONLOCAL  -> (operator tag, tail index, argument index)
    """

    name: str
    kind: SymbolKind
    meta: tuple = ()

    @property
    def sym(self) -> sp.Symbol:
        return sp.Symbol(self.name)

    def __str__(self) -> str:
        return self.name


class Workspace:
    """Symbol table.  Names are unique; kinds are fixed at declaration."""

    def __init__(self, auto_declare: bool = False):
        self._symbols: dict[str, Symbol] = {}
        self.auto_declare = auto_declare

    def declare(self, name: str, kind: SymbolKind, meta: tuple = ()) -> Symbol:
        existing = self._symbols.get(name)
        if existing is not None:
            if existing.kind != kind or existing.meta != meta:
                raise ExprError(
                    f"symbol {name!r} already declared with kind {existing.kind}"
                )
            return existing
        if not _IDENT_RE_FULL.match(name):
            raise ExprError(f"invalid identifier {name!r}")
        symbol = Symbol(name, kind, meta)
        self._symbols[name] = symbol
        return symbol

    def lookup(self, name: str) -> Symbol | None:
        return self._symbols.get(name)

    def resolve(self, name: str) -> Symbol:
        symbol = self._symbols.get(name)
        if symbol is not None:
            return symbol
        if self.auto_declare:
            return self.declare(name, SymbolKind.PARAMETER)
        raise UnknownIdentifierError(f"unknown identifier {name!r}")

    def by_sympy(self, s: sp.Symbol) -> Symbol | None:
        return self._symbols.get(s.name)

    def symbols(self) -> Iterable[Symbol]:
        return self._symbols.values()


def canonical(e) -> sp.Expr:
    """Canonical form: cancel to lowest terms with expanded num/den."""
    e = sp.sympify(e)
    if e.is_Rational:
        return e
    c = sp.cancel(sp.together(e))
    if c.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
        raise DivisionByZeroError("division by zero during canonicalization")
    return c


def reduce_sign_powers(e, syms) -> sp.Expr:
    """Reduce powers of square-one symbols: s**k becomes s**(k mod 2).

    Applied separately to numerator and denominator, so the result is the
    canonical representative modulo the relations s**2 = 1.
    """
    syms = {s if isinstance(s, sp.Symbol) else s.sym for s in syms}
    if not syms:
        return canonical(e)

    def red(p):
        p = sp.expand(p)
        return p.replace(
            lambda x: (x.is_Pow and x.base in syms
                       and x.exp.is_Integer),
            lambda x: x.base ** (x.exp % 2))
    num, den = sp.fraction(canonical(e))
    return canonical(sp.expand(red(num)) / sp.expand(red(den)))


class RationalExpr:
    """An exact rational function over Q in workspace symbols.

    Always stored canonically; ``==`` is syntactic equality of canonical
    forms.  Instances are immutable and safe to share.
    """

    __slots__ = ("e",)

    def __init__(self, e, _canonical: bool = False):
        self.e = sp.sympify(e) if _canonical else canonical(e)

    # -- constructors -------------------------------------------------
    @classmethod
    def integer(cls, n: int) -> "RationalExpr":
        return cls(sp.Integer(n), _canonical=True)

    @classmethod
    def rational(cls, p: int, q: int) -> "RationalExpr":
        if q == 0:
            raise DivisionByZeroError("rational with zero denominator")
        return cls(sp.Rational(p, q), _canonical=True)

    @classmethod
    def symbol(cls, s: Symbol) -> "RationalExpr":
        return cls(s.sym, _canonical=True)

    # -- arithmetic ---------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, RationalExpr):
            return other.e
        if isinstance(other, (int, Fraction)):
            return sp.Rational(other)
        if isinstance(other, sp.Expr):
            return other
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return RationalExpr(self.e + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return RationalExpr(self.e - o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return RationalExpr(o - self.e)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return RationalExpr(self.e * o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if canonical(o) == 0:
            raise DivisionByZeroError("division by zero")
        return RationalExpr(self.e / o)

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if self.e == 0:
            raise DivisionByZeroError("division by zero")
        return RationalExpr(o / self.e)

    def __pow__(self, k: int):
        if not isinstance(k, int):
            raise ExprError("exponent must be an integer")
        if k < 0 and self.e == 0:
            raise DivisionByZeroError("negative power of zero")
        return RationalExpr(self.e ** k)

    def __neg__(self):
        return RationalExpr(-self.e, _canonical=True)

    def __eq__(self, other):
        if isinstance(other, RationalExpr):
            return self.e == other.e
        if isinstance(other, (int, Fraction)):
            return self.e == sp.Rational(other)
        return NotImplemented

    def __hash__(self):
        return hash(self.e)

    def __repr__(self):
        return f"RationalExpr({to_string(self.e)})"

    def __str__(self):
        return to_string(self.e)

    # -- queries ------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return self.e == 0

    def numerator(self) -> sp.Expr:
        return sp.fraction(self.e)[0]

    def denominator(self) -> sp.Expr:
        return sp.fraction(self.e)[1]

    def free_symbols(self, ws: Workspace) -> list[Symbol]:
        out = []
        for s in sorted(self.e.free_symbols, key=default_sort_key):
            symbol = ws.by_sympy(s)
            if symbol is not None:
                out.append(symbol)
        return out

    # -- calculus and substitution ------------------------------------
    def differentiate(self, s: Symbol) -> "RationalExpr":
        return RationalExpr(sp.diff(self.e, s.sym))

    def substitute(self, bindings: Mapping[Symbol, "RationalExpr | int"]) -> "RationalExpr":
        subs = {}
        for k, v in bindings.items():
            key = k.sym if isinstance(k, Symbol) else sp.sympify(k)
            val = v.e if isinstance(v, RationalExpr) else sp.sympify(v)
            subs[key] = val
        if not subs:
            return self
        return RationalExpr(self.e.subs(subs, simultaneous=True))

    def factor(self) -> list[tuple["RationalExpr", int]]:
        """Factor into content-free irreducible polynomials over Q.

        The product of the returned ``factor ** exponent`` pairs equals the
        expression exactly; a rational content factor is included when it is
        not 1.
        """
        if self.e == 0:
            raise ExprError("cannot factor zero")
        num, den = sp.fraction(self.e)
        content = sp.Integer(1)
        fac: dict[sp.Expr, int] = {}

        def accumulate(poly, sign):
            nonlocal content
            coeff, factors = sp.factor_list(poly)
            content *= coeff ** sign
            for base, exp in factors:
                base = sp.expand(base)
                # normalize sign so the leading coefficient is positive
                lc = _leading_coeff(base)
                if lc < 0:
                    base = sp.expand(-base)
                    content *= sp.Integer(-1) ** (exp * sign)
                fac[base] = fac.get(base, 0) + exp * sign

        accumulate(num, +1)
        accumulate(den, -1)
        out: list[tuple[RationalExpr, int]] = []
        if content != 1:
            out.append((RationalExpr(content, _canonical=True), 1))
        for base in sorted(fac, key=default_sort_key):
            if fac[base] != 0:
                out.append((RationalExpr(base, _canonical=True), fac[base]))
        return out


def _leading_coeff(poly: sp.Expr):
    """Leading rational coefficient in sympy's canonical term order."""
    if poly.is_Rational:
        return poly
    gens = sorted(poly.free_symbols, key=default_sort_key)
    if not gens:
        return poly
    p = sp.Poly(poly, *gens)
    return p.LC()


# ---------------------------------------------------------------------------
# Parsing and printing.  Grammar (bit-exact contract):
#   identifiers [a-zA-Z][a-zA-Z0-9_]* ; integers ; operators + - * / ^
#   with the usual precedence, ^ right-associative with integer exponent,
#   parentheses.  The printer emits this same grammar.
# ---------------------------------------------------------------------------

import re

_IDENT_RE = re.compile(r"[a-zA-Z][a-zA-Z0-9_]*")
_IDENT_RE_FULL = re.compile(r"[a-zA-Z][a-zA-Z0-9_]*\Z")
_INT_RE = re.compile(r"[0-9]+")


class _Parser:
    def __init__(self, text: str, ws: Workspace):
        self.text = text
        self.ws = ws
        self.pos = 0

    def error(self, message: str):
        raise ExprSyntaxError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self) -> sp.Expr:
        e = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error(f"unexpected character {self.text[self.pos]!r}")
        return e

    def expr(self) -> sp.Expr:
        e = self.term()
        while True:
            c = self.peek()
            if c == "+":
                self.pos += 1
                e = e + self.term()
            elif c == "-":
                self.pos += 1
                e = e - self.term()
            else:
                return e

    def term(self) -> sp.Expr:
        e = self.unary()
        while True:
            c = self.peek()
            if c == "*":
                self.pos += 1
                e = e * self.unary()
            elif c == "/":
                self.pos += 1
                d = self.unary()
                if canonical(d) == 0:
                    raise DivisionByZeroError("division by syntactic zero")
                e = e / d
            else:
                return e

    def unary(self) -> sp.Expr:
        sign = 1
        while True:
            c = self.peek()
            if c == "-":
                sign = -sign
                self.pos += 1
            elif c == "+":
                self.pos += 1
            else:
                break
        return sign * self.power()

    def power(self) -> sp.Expr:
        base = self.atom()
        if self.peek() == "^":
            self.pos += 1
            exp = self.exponent()
            if exp < 0 and canonical(base) == 0:
                raise DivisionByZeroError("negative power of zero")
            return base ** exp
        return base

    def exponent(self) -> int:
        sign = 1
        while True:
            c = self.peek()
            if c == "-":
                sign = -sign
                self.pos += 1
            elif c == "+":
                self.pos += 1
            else:
                break
        self.skip_ws()
        if self.peek() == "(":
            self.pos += 1
            inner = self.exponent()
            self.skip_ws()
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
            return sign * inner
        m = _INT_RE.match(self.text, self.pos)
        if not m:
            self.error("expected integer exponent")
        self.pos = m.end()
        value = sign * int(m.group())
        # ^ is right-associative: a^b^c = a^(b^c); exponents are integers
        if self.peek() == "^":
            self.pos += 1
            value = value ** self.exponent()
        return value

    def atom(self) -> sp.Expr:
        self.skip_ws()
        if self.pos >= len(self.text):
            self.error("unexpected end of input")
        c = self.text[self.pos]
        if c == "(":
            self.pos += 1
            e = self.expr()
            self.skip_ws()
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
            return e
        m = _INT_RE.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return sp.Integer(int(m.group()))
        m = _IDENT_RE.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return self.ws.resolve(m.group()).sym
        self.error(f"unexpected character {c!r}")


def parse(text: str, ws: Workspace) -> RationalExpr:
    """Parse ``text`` against the workspace symbol table."""
    return RationalExpr(_Parser(text, ws).parse())


class _GrammarPrinter(sp.printing.str.StrPrinter):
    """Prints expressions in the parser's grammar (with ^ for powers)."""

    def _print_Pow(self, expr, rational=False):
        return super()._print_Pow(expr, rational=rational).replace("**", "^")


_printer = _GrammarPrinter({"order": None})


def to_string(e) -> str:
    if isinstance(e, RationalExpr):
        e = e.e
    return _printer.doprint(sp.sympify(e)).replace("**", "^")
