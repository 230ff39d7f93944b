"""Schouten bracket of weakly nonlocal operators.

The bracket of two operators A, B is assembled as the trilinear density

    sum over cyclic (s1,s2,s3) of
        < psi^(s1), Du(A psi^(s2))[B psi^(s3)] >
      + < psi^(s1), Du(B psi^(s2))[A psi^(s3)] >

where Du is the Frechet derivative in the field variables, extended through
the nonlocal symbols: the dependence of A psi^(s2) on phi_{b,s2} contributes
the weakly nonlocal correction

    - sum_{a,b} c^{ab} phi_{a,s1} Du(w_b . psi^(s2))[B psi^(s3)],

which is the integrated-by-parts image of the Dx^{-1} chain-rule term.  The
result is normalized modulo Im Dx; a Hamiltonian pair must normalize to zero
(after enumerating declared parameter sign cases).
"""

from __future__ import annotations

import itertools

import sympy as sp
from sympy.core.sorting import default_sort_key

from .density import (
    MultiDensity,
    dx_density,
    dx_density_n,
    normalize_density,
)
from .expr import ExprError, Symbol, SymbolKind, canonical
from .jet import JetSpace, OrderOverflowError
from .operators import WnlOperator


class UnregisteredTailError(ExprError):
    pass


class CovectorSet:
    """Covector symbols psi<s>_<i> with jet extensions, for slots 1..3."""

    def __init__(self, space: JetSpace, args=(1, 2, 3)):
        self.space = space
        self.args = tuple(args)
        self._symbols: dict[tuple[int, int, int], Symbol] = {}
        ws = space.workspace
        for s in self.args:
            for i in range(1, space.n + 1):
                for k in range(space.max_order + 1):
                    base = f"psi{s}_{i}"
                    name = base if k == 0 else (
                        f"{base}_x" if k == 1 else f"{base}_x{k}")
                    self._symbols[(s, i, k)] = ws.declare(
                        name, SymbolKind.COVECTOR, (s, i, k))
        self._by_sympy = {sym.sym: key for key, sym in self._symbols.items()}

    def cov(self, s: int, i: int, k: int = 0) -> Symbol:
        return self._symbols[(s, i, k)]

    def index(self, s: sp.Symbol):
        return self._by_sympy.get(s)


class NonlocalRegistry:
    """Nonlocal symbols phi_<op>_<a>_<s> with Dx phi = w_a . psi^(s)."""

    def __init__(self, space: JetSpace, covectors: CovectorSet):
        self.space = space
        self.covectors = covectors
        self._tails: dict[str, list[list[sp.Expr]]] = {}
        self._symbols: dict[tuple[str, int, int], Symbol] = {}

    def register(self, op: WnlOperator):
        self._tails[op.tag] = op.tails
        for a in range(1, len(op.tails) + 1):
            for s in self.covectors.args:
                self.phi(op.tag, a, s)

    def phi(self, tag: str, a: int, s: int) -> Symbol:
        key = (tag, a, s)
        sym = self._symbols.get(key)
        if sym is None:
            name = f"phi_{tag}_{a}_{s}"
            sym = self.space.workspace.declare(
                name, SymbolKind.NONLOCAL, (tag, a, s))
            self._symbols[key] = sym
        return sym

    def defining(self, sym: Symbol) -> list[tuple[Symbol, sp.Expr]]:
        """Dx phi as [(covector symbol, coefficient)]."""
        tag, a, s = sym.meta
        tails = self._tails.get(tag)
        if tails is None or a > len(tails):
            raise UnregisteredTailError(
                f"no registered tail for nonlocal symbol {sym.name}")
        w = tails[a - 1]
        return [(self.covectors.cov(s, i, 0), w[i - 1])
                for i in range(1, self.space.n + 1) if w[i - 1] != 0]


class SchoutenContext:
    """DxContext implementation over a jet space, covectors and registry."""

    def __init__(self, space: JetSpace, covectors: CovectorSet,
                 registry: NonlocalRegistry):
        self.space = space
        self.covectors = covectors
        self.registry = registry

    def dx_coeff(self, e):
        return self.space.dx(e)

    def dx_key(self, sym: Symbol):
        if sym.kind == SymbolKind.COVECTOR:
            s, i, k = sym.meta
            if k >= self.space.max_order:
                raise OrderOverflowError("covector jet order overflow")
            return [(self.covectors.cov(s, i, k + 1), sp.Integer(1))]
        if sym.kind == SymbolKind.NONLOCAL:
            return self.registry.defining(sym)
        raise ExprError(f"not a slot factor: {sym.name}")

    def cov_lower(self, sym: Symbol) -> Symbol:
        s, i, k = sym.meta
        return self.covectors.cov(s, i, k - 1)


def apply_operator(op: WnlOperator, s: int,
                   ctx: SchoutenContext) -> list[MultiDensity]:
    """(A psi^(s))^i as densities linear in slot s."""
    n = op.n
    out = []
    for i in range(1, n + 1):
        d = MultiDensity.zero((s,))
        for j in range(1, n + 1):
            for k, c in op.local[i - 1][j - 1].items():
                d.add_term((ctx.covectors.cov(s, j, k),), c)
        t = len(op.tails)
        for b in range(1, t + 1):
            coeff = canonical(sum(op.coupling[a - 1][b - 1] * op.tails[a - 1][i - 1]
                                  for a in range(1, t + 1)))
            if coeff != 0:
                d.add_term((ctx.registry.phi(op.tag, b, s),), coeff)
        out.append(d)
    return out


def apply(op: WnlOperator, s: int, ctx: SchoutenContext) -> list[sp.Expr]:
    """Public form of apply: expressions in psi/phi symbols."""
    return [d.to_expr() for d in apply_operator(op, s, ctx)]


def _frechet_directional(E: MultiDensity, X: list[list[MultiDensity]],
                         ctx: SchoutenContext) -> MultiDensity:
    """Du E [X]: derivative of E's coefficients along the u-direction X.

    ``X[j-1][k]`` is Dx^k of the j-th direction component.  Dependence of E
    on nonlocal factors is NOT included here (handled by the caller through
    the tail correction).
    """
    space = ctx.space
    slots = tuple(sorted(set(E.slots) | set(X[0][0].slots)))
    out = MultiDensity.zero(slots)
    for key, c in E.terms.items():
        for s in c.free_symbols:
            idx = space.jet_index(s)
            if idx is None:
                continue
            j, k = idx
            dc = sp.diff(c, s)
            base = MultiDensity(E.slots, {key: dc})
            for k2, c2 in base.multiply(X[j - 1][k]).terms.items():
                out.add_term(k2, c2)
    return out


def _tail_density(op: WnlOperator, a: int, s: int,
                  ctx: SchoutenContext) -> MultiDensity:
    """w_a . psi^(s) as a density over slot s."""
    d = MultiDensity.zero((s,))
    for i in range(1, op.n + 1):
        d.add_term((ctx.covectors.cov(s, i, 0),), op.tails[a - 1][i - 1])
    return d


def _bracket_term(A: WnlOperator, B: WnlOperator, s1: int, s2: int, s3: int,
                  ctx: SchoutenContext) -> MultiDensity:
    """< psi^(s1), Du(A psi^(s2))[B psi^(s3)] > with nonlocal correction."""
    space = ctx.space
    E = apply_operator(A, s2, ctx)
    Xv = apply_operator(B, s3, ctx)
    depth = max(A.coeff_jet_order(), 1)
    X = []
    for j in range(space.n):
        comps = [Xv[j]]
        for _ in range(depth):
            comps.append(dx_density(comps[-1], ctx))
        X.append(comps)
    slots = tuple(sorted({s1, s2, s3}))
    out = MultiDensity.zero(slots)
    for i in range(1, space.n + 1):
        dterm = _frechet_directional(E[i - 1], X, ctx)
        contracted = dterm.tensor_insert(s1, ctx.covectors.cov(s1, i, 0))
        for k2, c2 in contracted.terms.items():
            out.add_term(k2, c2)
    t = len(A.tails)
    for b in range(1, t + 1):
        M = _frechet_directional(_tail_density(A, b, s2, ctx), X, ctx)
        for a in range(1, t + 1):
            cab = canonical(A.coupling[a - 1][b - 1])
            if cab == 0:
                continue
            phi = ctx.registry.phi(A.tag, a, s1)
            corr = M.tensor_insert(s1, phi, -cab)
            for k2, c2 in corr.terms.items():
                out.add_term(k2, c2)
    return out


class TriVector:
    """Trilinear density in psi^(1..3) and nonlocal symbols."""

    def __init__(self, density: MultiDensity, ctx: SchoutenContext,
                 normalized: bool = False):
        self.density = density
        self.ctx = ctx
        self.normalized = normalized

    def normalize(self) -> "TriVector":
        if self.normalized:
            return self
        nf, _ = normalize_density(self.density, self.ctx)
        return TriVector(nf, self.ctx, normalized=True)

    def is_zero(self, cases: list[dict] | None = None):
        """(verdict, witness).  True iff the density canonicalizes to zero
        under every substitution case; a failing case yields one nonzero
        coefficient as witness."""
        t = self if self.normalized else self.normalize()
        if not cases:
            cases = [{}]
        for case in cases:
            subs = {k.sym if hasattr(k, "sym") else sp.sympify(k): sp.sympify(
                v.e if hasattr(v, "e") else v) for k, v in case.items()}
            for key, c in t.density.sorted_terms():
                r = sp.cancel(sp.together(c.subs(subs, simultaneous=True)))
                if r != 0:
                    return False, (case, key, r)
        return True, None

    def to_expr(self) -> sp.Expr:
        return self.density.to_expr()


def schouten_bracket(A: WnlOperator, B: WnlOperator,
                     ctx: SchoutenContext) -> TriVector:
    """Normalized Schouten bracket [A, B] as a trilinear density."""
    ctx.registry.register(A)
    ctx.registry.register(B)
    total = MultiDensity.zero((1, 2, 3))
    for (s1, s2, s3) in ((1, 2, 3), (2, 3, 1), (3, 1, 2)):
        for t in (_bracket_term(A, B, s1, s2, s3, ctx),
                  _bracket_term(B, A, s1, s2, s3, ctx)):
            for key, c in t.terms.items():
                total.add_term(key, c)
    total = total.pruned()
    return TriVector(total, ctx).normalize()
