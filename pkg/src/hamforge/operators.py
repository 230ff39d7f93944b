"""Weakly nonlocal Hamiltonian operators.

An operator is a matrix of local differential parts (coefficients by
derivative order) plus a list of tail vectors w_a coupled by a constant
symmetric matrix c^{ab}; each tail contributes a term
``w_a^i Dx^{-1} w_b^j`` with weight c^{ab}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import sympy as sp

from .expr import ExprError, RationalExpr, canonical
from .geometry import (
    Metric,
    SquareArray,
    christoffel,
    christoffel_contravariant,
    invert_metric,
)
from .jet import JetSpace


def _e(v):
    return v.e if isinstance(v, RationalExpr) else sp.sympify(v)


@dataclass
class WnlOperator:
    """local[i][j] maps derivative order -> coefficient; tails[a] is an
    n-vector of differential polynomials; coupling is symmetric and constant
    (parameters only)."""

    space: JetSpace
    tag: str
    local: list[list[dict[int, sp.Expr]]]
    tails: list[list[sp.Expr]] = field(default_factory=list)
    coupling: list[list[sp.Expr]] = field(default_factory=list)

    def __post_init__(self):
        n = self.space.n
        if len(self.local) != n or any(len(row) != n for row in self.local):
            raise ExprError("local part must be n x n")
        t = len(self.tails)
        if len(self.coupling) != t or any(len(r) != t for r in self.coupling):
            raise ExprError("coupling shape must match tail count")
        for a in range(t):
            for b in range(a + 1, t):
                if canonical(self.coupling[a][b]) != canonical(self.coupling[b][a]):
                    raise ExprError("coupling matrix must be symmetric")

    @property
    def n(self) -> int:
        return self.space.n

    def max_local_order(self) -> int:
        orders = [k for row in self.local for entry in row for k in entry]
        return max(orders, default=0)

    def coeff_jet_order(self) -> int:
        """Highest u-jet order appearing in local coefficients and tails."""
        order = 0
        for row in self.local:
            for entry in row:
                for c in entry.values():
                    order = max(order, self.space.order_of(c))
        for w in self.tails:
            for c in w:
                order = max(order, self.space.order_of(c))
        return order

    def substitute(self, bindings: dict) -> "WnlOperator":
        subs = {k.sym if hasattr(k, "sym") else sp.sympify(k): _e(v)
                for k, v in bindings.items()}

        def f(e):
            return canonical(sp.sympify(e).subs(subs, simultaneous=True))

        return WnlOperator(
            self.space, self.tag,
            [[{k: f(c) for k, c in entry.items() if f(c) != 0}
              for entry in row] for row in self.local],
            [[f(c) for c in w] for w in self.tails],
            [[f(c) for c in row] for row in self.coupling])


def make_ferapontov(space: JetSpace, g: Metric, V: SquareArray,
                    alpha, beta, gamma, tag: str = "A1") -> WnlOperator:
    """g^{ij} Dx + Gamma^{ij}_k u^k_x + alpha (Vu_x) Dx^-1 (Vu_x)
    + beta ((Vu_x) Dx^-1 u_x + u_x Dx^-1 (Vu_x)) + gamma u_x Dx^-1 u_x."""
    if g.variance == "contravariant":
        gu, gl = g, invert_metric(g)
    else:
        gl, gu = g, invert_metric(g)
    g = gu
    n = space.n
    chr3 = christoffel_contravariant(space, gl, gu=gu)
    ux = [space.jet(k, 1).sym for k in range(1, n + 1)]
    local = []
    for i in range(1, n + 1):
        row = []
        for j in range(1, n + 1):
            entry: dict[int, sp.Expr] = {}
            if g[i, j] != 0:
                entry[1] = g[i, j]
            b = canonical(sum(chr3[i, j, k] * ux[k - 1] for k in range(1, n + 1)))
            if b != 0:
                entry[0] = b
            row.append(entry)
        local.append(row)
    w1 = [canonical(sum(V[i, q] * ux[q - 1] for q in range(1, n + 1)))
          for i in range(1, n + 1)]
    w2 = list(ux)
    coupling = [[canonical(alpha), canonical(beta)],
                [canonical(beta), canonical(gamma)]]
    return WnlOperator(space, tag, local, [w1, w2], coupling)


def third_order_c_tensors(space: JetSpace, h: Metric):
    """(c_{ijk}, c^{ij}_k, h contravariant) for a covariant metric h."""
    if h.variance != "covariant":
        h = invert_metric(h)
    hu = invert_metric(h)
    n = space.n
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]
    rng = range(1, n + 1)
    c_lo = [[[canonical(sp.Rational(1, 3) *
                        (sp.diff(h[i, k], fields[j - 1])
                         - sp.diff(h[i, j], fields[k - 1])))
              for k in rng] for j in rng] for i in rng]
    c_hi = [[[canonical(sum(hu[i, a] * hu[j, b] * c_lo[b - 1][a - 1][k - 1]
                            for a in rng for b in rng))
              for k in rng] for j in rng] for i in rng]
    return c_lo, c_hi, hu


def make_third_order(space: JetSpace, h: Metric, tag: str = "A2") -> WnlOperator:
    """Canonical third-order operator Dx (h^{ij} Dx + c^{ij}_k u^k_x) Dx."""
    if h.variance != "covariant":
        h = invert_metric(h)
    if h.det() == 0:
        raise ExprError("singular metric")
    c_lo, c_hi, hu = third_order_c_tensors(space, h)
    n = space.n
    ux = [space.jet(k, 1).sym for k in range(1, n + 1)]
    local = []
    for i in range(1, n + 1):
        row = []
        for j in range(1, n + 1):
            con = sum(c_hi[i - 1][j - 1][k - 1] * ux[k - 1]
                      for k in range(1, n + 1))
            entry = {
                3: hu[i, j],
                2: canonical(space.dx(hu[i, j]) + con),
                1: canonical(space.dx(con)),
            }
            row.append({k: c for k, c in entry.items() if c != 0})
        local.append(row)
    return WnlOperator(space, tag, local, [], [])
