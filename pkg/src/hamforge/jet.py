"""Jet-space bookkeeping for one independent variable x.

Declares derivative coordinates ``u<i>_x``, ``u<i>_x2``, ... up to a maximum
order and provides the total derivative, the variational derivative and the
Frechet linearization of differential vector functions.
"""

from __future__ import annotations

import sympy as sp

from .expr import (
    ExprError,
    RationalExpr,
    Symbol,
    SymbolKind,
    Workspace,
    canonical,
)


class OrderOverflowError(ExprError):
    """Raised when a total derivative would exceed the materialized order."""


def jet_name(prefix: str, i: int, k: int) -> str:
    if k == 0:
        return f"{prefix}{i}"
    if k == 1:
        return f"{prefix}{i}_x"
    return f"{prefix}{i}_x{k}"


class JetSpace:
    """n field variables with x-derivative coordinates up to ``max_order``."""

    def __init__(self, workspace: Workspace, n: int, max_order: int = 8,
                 prefix: str = "u"):
        if n < 1:
            raise ExprError("need at least one field variable")
        if max_order < 1:
            raise ExprError("max_order must be >= 1")
        self.workspace = workspace
        self.n = n
        self.max_order = max_order
        self.prefix = prefix
        self._jets: dict[tuple[int, int], Symbol] = {}
        for i in range(1, n + 1):
            field = workspace.declare(jet_name(prefix, i, 0), SymbolKind.FIELD)
            self._jets[(i, 0)] = field
            for k in range(1, max_order + 1):
                name = jet_name(prefix, i, k)
                self._jets[(i, k)] = workspace.declare(
                    name, SymbolKind.JET, (field.name, k))
        self._by_sympy = {s.sym: (i, k) for (i, k), s in self._jets.items()}

    def jet(self, i: int, k: int = 0) -> Symbol:
        return self._jets[(i, k)]

    def fields(self) -> list[Symbol]:
        return [self._jets[(i, 0)] for i in range(1, self.n + 1)]

    def jet_index(self, s: sp.Symbol) -> tuple[int, int] | None:
        """(field index, order) when ``s`` is a jet coordinate, else None."""
        return self._by_sympy.get(s)

    def order_of(self, e) -> int:
        """Highest derivative order appearing in the expression."""
        e = e.e if isinstance(e, RationalExpr) else sp.sympify(e)
        order = 0
        for s in e.free_symbols:
            idx = self._by_sympy.get(s)
            if idx is not None and idx[1] > order:
                order = idx[1]
        return order

    def has_positive_jets(self, e) -> bool:
        e = e.e if isinstance(e, RationalExpr) else sp.sympify(e)
        return any((idx := self._by_sympy.get(s)) is not None and idx[1] > 0
                   for s in e.free_symbols)

    # -- calculus on raw sympy expressions ----------------------------
    def dx(self, e) -> sp.Expr:
        """Total x-derivative of a sympy expression in jet coordinates.

        Symbols that are not jet coordinates (parameters, unknowns) are
        treated as constants.
        """
        e = sp.sympify(e)
        out = sp.Integer(0)
        for s in e.free_symbols:
            idx = self._by_sympy.get(s)
            if idx is None:
                continue
            i, k = idx
            if k >= self.max_order:
                raise OrderOverflowError(
                    f"total derivative exceeds max_order={self.max_order}")
            out += sp.diff(e, s) * self._jets[(i, k + 1)].sym
        return out

    def dx_n(self, e, times: int) -> sp.Expr:
        for _ in range(times):
            e = self.dx(e)
        return e

    def variational_derivative_raw(self, e, i: int) -> sp.Expr:
        e = sp.sympify(e)
        out = sp.Integer(0)
        order = self.order_of(e)
        for k in range(order + 1):
            term = sp.diff(e, self._jets[(i, k)].sym)
            for _ in range(k):
                term = -self.dx(term)
            out += term
        return canonical(out)


class DiffPoly:
    """A differential polynomial: rational expression in jet coordinates."""

    __slots__ = ("space", "expr")

    def __init__(self, space: JetSpace, expr):
        self.space = space
        self.expr = expr if isinstance(expr, RationalExpr) else RationalExpr(expr)

    @property
    def order(self) -> int:
        return self.space.order_of(self.expr)

    def __eq__(self, other):
        return isinstance(other, DiffPoly) and self.expr == other.expr

    def __hash__(self):
        return hash(self.expr)

    def __repr__(self):
        return f"DiffPoly({self.expr})"

    def __str__(self):
        return str(self.expr)


def total_derivative(p: DiffPoly) -> DiffPoly:
    return DiffPoly(p.space, canonical(p.space.dx(p.expr.e)))


def variational_derivative(density: DiffPoly, i: int) -> DiffPoly:
    return DiffPoly(density.space,
                    density.space.variational_derivative_raw(density.expr.e, i))


class LinearDiffOp:
    """A matrix differential operator sum_k coeff[i][j][k] * D_x^k."""

    def __init__(self, space: JetSpace, coeffs: list[list[dict[int, sp.Expr]]]):
        self.space = space
        self.coeffs = coeffs

    def entry(self, i: int, j: int) -> dict[int, sp.Expr]:
        """Coefficients by derivative order for the (i, j) entry (1-based)."""
        return self.coeffs[i - 1][j - 1]

    def apply(self, vec: list) -> list[RationalExpr]:
        """Apply to a vector of expressions (componentwise differential)."""
        out = []
        for row in self.coeffs:
            acc = sp.Integer(0)
            for j, entry in enumerate(row):
                v = vec[j]
                v = v.e if isinstance(v, RationalExpr) else sp.sympify(v)
                for k, c in entry.items():
                    acc += c * self.space.dx_n(v, k)
            out.append(RationalExpr(acc))
        return out


def linearize(F: list[DiffPoly]) -> LinearDiffOp:
    """Frechet derivative of a differential vector function."""
    if not F:
        raise ExprError("empty vector")
    space = F[0].space
    coeffs: list[list[dict[int, sp.Expr]]] = []
    for f in F:
        row = []
        order = space.order_of(f.expr)
        for j in range(1, space.n + 1):
            entry: dict[int, sp.Expr] = {}
            for k in range(order + 1):
                c = canonical(sp.diff(f.expr.e, space.jet(j, k).sym))
                if c != 0:
                    entry[k] = c
            row.append(entry)
        coeffs.append(row)
    return LinearDiffOp(space, coeffs)
