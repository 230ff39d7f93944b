"""WDVV system generation for three field variables and system ingestion.

The associativity equations for a potential F with a constant metric eta
reduce, after the standard cubic-plus-remainder normal form of F, to an
overdetermined system on one function f of the last N-1 variables.  For
N = 3 there is a single scalar equation; solving it for the highest
derivative of f and passing to the variables u^1 = f_xxx, u^2 = f_xxt,
u^3 = f_xtt gives a quasilinear system of conservation laws.
"""

from __future__ import annotations

from dataclasses import dataclass

import sympy as sp

from .expr import (
    ExprError,
    RationalExpr,
    SymbolKind,
    Workspace,
    canonical,
    parse,
    reduce_sign_powers,
)
from .jet import JetSpace


class SystemFormatError(ExprError):
    pass


class GenerationError(ExprError):
    pass


@dataclass
class EtaSpec:
    """Constant symmetric nondegenerate matrix eta_{ab} over Q, possibly
    extended by declared sign parameters."""

    N: int
    entries: list

    def __post_init__(self):
        m = sp.Matrix(self.entries)
        if m.shape != (self.N, self.N):
            raise ExprError("eta shape mismatch")
        if not m.is_symmetric():
            raise ExprError("eta must be symmetric")
        if m.det() == 0:
            raise ExprError("eta must be nondegenerate")

    def matrix(self) -> sp.Matrix:
        return sp.Matrix(self.entries)

    def inverse(self) -> sp.Matrix:
        m = self.matrix()
        return (m.adjugate() / m.det()).applyfunc(sp.cancel)

    @classmethod
    def canonical_antidiagonal(cls, N: int) -> "EtaSpec":
        ent = [[sp.Integer(1) if a + b == N + 1 else sp.Integer(0)
                for b in range(1, N + 1)] for a in range(1, N + 1)]
        return cls(N, ent)

    @classmethod
    def eta4(cls, workspace: Workspace | None = None) -> "EtaSpec":
        """diag(1, lambda, mu) with lambda^2 = mu^2 = 1, declaring the two
        sign parameters in the workspace when given."""
        lam, mu = sp.Symbol("lam"), sp.Symbol("mu")
        if workspace is not None:
            for s in ("lam", "mu"):
                if workspace.lookup(s) is None:
                    workspace.declare(s, SymbolKind.PARAMETER)
        return cls(3, [[sp.Integer(1), 0, 0], [0, lam, 0], [0, 0, mu]])

    def parameters(self) -> list[sp.Symbol]:
        syms = set()
        for row in self.entries:
            for e in row:
                syms |= sp.sympify(e).free_symbols
        return sorted(syms, key=sp.default_sort_key)


@dataclass
class HydroSystem:
    """First-order quasilinear system of conservation laws
    u^i_t = (flux^i(u))_x."""

    space: JetSpace
    fluxes: list
    provenance: str = "user-file"

    def __post_init__(self):
        if len(self.fluxes) != self.space.n:
            raise ExprError("flux count does not match field count")
        self.fluxes = [f.e if isinstance(f, RationalExpr) else
                       canonical(f) for f in self.fluxes]
        for f in self.fluxes:
            if self.space.has_positive_jets(f):
                raise ExprError("fluxes must be functions of the field "
                                "variables only")

    @property
    def n(self) -> int:
        return self.space.n


def generate_wdvv_n3(eta: EtaSpec, space: JetSpace):
    """(scalar associativity equation, HydroSystem) for N = 3.

    The equation is returned in the symbols f_xxx, f_xxt, f_xtt, f_ttt;
    the system uses u1 = f_xxx, u2 = f_xxt, u3 = f_xtt and has fluxes
    (u2, u3, solved f_ttt).
    """
    if eta.N != 3:
        raise GenerationError("generation is implemented for N = 3 only")
    if space.n != 3:
        raise GenerationError("need a three-field jet space")
    names = {(2, 2, 2): "f_xxx", (2, 2, 3): "f_xxt",
             (2, 3, 3): "f_xtt", (3, 3, 3): "f_ttt"}
    deriv = {k: sp.Symbol(v) for k, v in names.items()}
    etau = eta.inverse()

    def F3(a, b, c):
        if 1 in (a, b, c):
            pair = [x for x in (a, b, c) if x != 1]
            pair = (pair + [1, 1])[:2]
            return sp.sympify(eta.entries[pair[0] - 1][pair[1] - 1])
        return deriv[tuple(sorted((a, b, c)))]

    z = deriv[(3, 3, 3)]
    residuals = []
    rng = range(1, 4)
    for al in rng:
        for be in rng:
            for ga in rng:
                for nu in rng:
                    e = sum(etau[m - 1, l - 1]
                            * (F3(l, al, be) * F3(nu, m, ga)
                               - F3(nu, al, m) * F3(l, be, ga))
                            for m in rng for l in rng)
                    e = sp.expand(e)
                    if e != 0:
                        residuals.append(e)
    equation = None
    for e in residuals:
        p = sp.Poly(e, z)
        if p.degree() == 1:
            equation = e
            break
    if equation is None:
        raise GenerationError("no residual is linear in the top derivative")
    p = sp.Poly(equation, z)
    lead = p.coeff_monomial(z)
    if sp.cancel(lead) == 0:
        raise GenerationError("leading coefficient vanishes identically")
    zsol = sp.cancel(-p.coeff_monomial(1) / lead)
    # every residual must vanish on the solution
    for e in residuals:
        if sp.cancel(sp.together(e.subs(z, zsol))) != 0:
            raise GenerationError("associativity residuals are not "
                                  "reducible to a single equation")
    subs = {deriv[(2, 2, 2)]: space.jet(1, 0).sym,
            deriv[(2, 2, 3)]: space.jet(2, 0).sym,
            deriv[(2, 3, 3)]: space.jet(3, 0).sym}
    params = eta.parameters()
    flux3 = reduce_sign_powers(zsol.subs(subs, simultaneous=True), params)
    system = HydroSystem(space,
                         [space.jet(2, 0).sym, space.jet(3, 0).sym, flux3],
                         provenance="generated-N3")
    return reduce_sign_powers(equation, params), system


def load_system(text: str, workspace: Workspace,
                max_order: int = 8) -> HydroSystem:
    """Parse the plain-text system format.

    First nonempty line: ``fields n``; then exactly n lines
    ``flux <i> = <expression>`` with i = 1..n in order.  Unknown identifiers
    in the expressions become parameters; jet variables are rejected.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise SystemFormatError("empty system file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "fields" or not head[1].isdigit():
        raise SystemFormatError(f"bad header line: {lines[0]!r}")
    n = int(head[1])
    if n < 1:
        raise SystemFormatError("field count must be positive")
    if len(lines) != n + 1:
        raise SystemFormatError(
            f"expected {n} flux lines, found {len(lines) - 1}")
    space = JetSpace(workspace, n, max_order=max_order)
    fluxes = []
    for i, ln in enumerate(lines[1:], start=1):
        left, sep, right = ln.partition("=")
        parts = left.split()
        if not sep or len(parts) != 2 or parts[0] != "flux":
            raise SystemFormatError(f"bad flux line: {ln!r}")
        if parts[1] != str(i):
            raise SystemFormatError(
                f"flux lines must be numbered consecutively; got {ln!r}")
        old_auto = workspace.auto_declare
        workspace.auto_declare = True
        try:
            e = parse(right.strip(), workspace).e
        finally:
            workspace.auto_declare = old_auto
        if space.has_positive_jets(e):
            raise SystemFormatError(
                f"flux {i} contains jet variables")
        fluxes.append(e)
    return HydroSystem(space, fluxes, provenance="user-file")
