"""Multilinear densities in covector and nonlocal symbols.

A density is stored as a sparse map from a tuple of slot factors (one symbol
per argument slot: either a covector jet ``psi<s>_<i>`` or a nonlocal symbol
``phi_<op>_<a>_<s>``) to a scalar coefficient in the jet variables.  This is
the working representation for operators applied to covectors, for Schouten
bracket densities, and for the integration-by-parts normal form modulo
total x-derivatives.

The normal form processes argument slots from the highest down: derivatives
are moved off the slot's covector until it appears underived; coefficients of
the slot's nonlocal symbols are normalized recursively over the remaining
slots, with the extracted total-derivative cofactors pushed back in through
the defining relation D_x phi = w . psi.
"""

from __future__ import annotations

import sympy as sp
from sympy.core.sorting import default_sort_key

from .expr import ExprError, Symbol, SymbolKind


class DensityError(ExprError):
    pass


class DxContext:
    """Protocol required by density calculus.

    ``dx_coeff(e)``    total x-derivative of a scalar coefficient (u-jets).
    ``dx_key(sym)``    derivative of a slot factor as [(symbol, coeff)].
    ``covector(s, i)`` the underived covector symbol for slot s, field i.
    ``cov_lower(sym)`` the covector symbol one derivative order below.
    """


def slot_of(sym: Symbol) -> int:
    if sym.kind == SymbolKind.COVECTOR:
        return sym.meta[0]
    if sym.kind == SymbolKind.NONLOCAL:
        return sym.meta[2]
    raise DensityError(f"symbol {sym.name} is not a slot factor")


def cov_order(sym: Symbol) -> int:
    """Derivative order of a covector factor; -1 for nonlocal symbols."""
    if sym.kind == SymbolKind.COVECTOR:
        return sym.meta[2]
    return -1


class MultiDensity:
    """Multilinear density over a fixed tuple of argument slots."""

    __slots__ = ("slots", "terms")

    def __init__(self, slots: tuple[int, ...],
                 terms: dict[tuple, sp.Expr] | None = None):
        self.slots = tuple(slots)
        self.terms: dict[tuple, sp.Expr] = {}
        if terms:
            for key, c in terms.items():
                if c != 0:
                    self.terms[key] = self.terms.get(key, sp.Integer(0)) + c
            self.terms = {k: v for k, v in self.terms.items() if v != 0}

    @classmethod
    def zero(cls, slots) -> "MultiDensity":
        return cls(tuple(slots))

    @classmethod
    def scalar(cls, e) -> "MultiDensity":
        return cls((), {(): sp.sympify(e)})

    def copy(self) -> "MultiDensity":
        return MultiDensity(self.slots, dict(self.terms))

    def is_structurally_zero(self) -> bool:
        return not self.terms

    def add_term(self, key: tuple, coeff):
        coeff = sp.sympify(coeff)
        if coeff == 0:
            return
        cur = self.terms.get(key)
        new = coeff if cur is None else cur + coeff
        if new == 0:
            self.terms.pop(key, None)
        else:
            self.terms[key] = new

    def __add__(self, other: "MultiDensity") -> "MultiDensity":
        if self.slots != other.slots:
            raise DensityError("slot mismatch")
        out = self.copy()
        for key, c in other.terms.items():
            out.add_term(key, c)
        return out

    def __sub__(self, other: "MultiDensity") -> "MultiDensity":
        return self + other.scale(-1)

    def scale(self, factor) -> "MultiDensity":
        factor = sp.sympify(factor)
        if factor == 0:
            return MultiDensity.zero(self.slots)
        return MultiDensity(self.slots,
                            {k: factor * c for k, c in self.terms.items()})

    def pruned(self) -> "MultiDensity":
        """Cancel all coefficients and drop the ones that are zero."""
        out = {}
        for key, c in self.terms.items():
            c = sp.cancel(sp.together(c))
            if c != 0:
                out[key] = c
        return MultiDensity(self.slots, out)

    def slot_position(self, s: int) -> int:
        try:
            return self.slots.index(s)
        except ValueError:
            raise DensityError(f"slot {s} absent from density") from None

    def tensor_insert(self, s: int, sym: Symbol,
                      coeff=sp.Integer(1)) -> "MultiDensity":
        """Multiply by a factor living in a new slot ``s``."""
        if s in self.slots:
            raise DensityError(f"slot {s} already present")
        pos = 0
        while pos < len(self.slots) and self.slots[pos] < s:
            pos += 1
        slots = self.slots[:pos] + (s,) + self.slots[pos:]
        terms = {}
        for key, c in self.terms.items():
            nk = key[:pos] + (sym,) + key[pos:]
            terms[nk] = terms.get(nk, sp.Integer(0)) + c * coeff
        return MultiDensity(slots, terms)

    def drop_slot(self, s: int) -> dict[Symbol, "MultiDensity"]:
        """Group terms by the slot-s factor; values are lower densities."""
        pos = self.slot_position(s)
        slots = self.slots[:pos] + self.slots[pos + 1:]
        groups: dict[Symbol, MultiDensity] = {}
        for key, c in self.terms.items():
            sym = key[pos]
            low = key[:pos] + key[pos + 1:]
            groups.setdefault(sym, MultiDensity.zero(slots)).add_term(low, c)
        return groups

    def multiply(self, other: "MultiDensity") -> "MultiDensity":
        """Product of densities over disjoint slot sets."""
        if set(self.slots) & set(other.slots):
            raise DensityError("overlapping slots in product")
        slots = tuple(sorted(self.slots + other.slots))
        pos = {s: i for i, s in enumerate(slots)}
        out = MultiDensity.zero(slots)
        for k1, c1 in self.terms.items():
            for k2, c2 in other.terms.items():
                key = [None] * len(slots)
                for s, sym in zip(self.slots, k1):
                    key[pos[s]] = sym
                for s, sym in zip(other.slots, k2):
                    key[pos[s]] = sym
                out.add_term(tuple(key), c1 * c2)
        return out

    def map_coeffs(self, fn) -> "MultiDensity":
        out = {}
        for key, c in self.terms.items():
            c = fn(c)
            if c != 0:
                out[key] = c
        return MultiDensity(self.slots, out)

    def to_expr(self) -> sp.Expr:
        acc = sp.Integer(0)
        for key, c in self.terms.items():
            t = c
            for sym in key:
                t *= sym.sym
            acc += t
        return acc

    def sorted_terms(self):
        return sorted(self.terms.items(),
                      key=lambda kv: tuple(default_sort_key(s.sym)
                                           for s in kv[0]))

    def __repr__(self):
        parts = [f"({c})*{'*'.join(s.name for s in key) or '1'}"
                 for key, c in self.sorted_terms()]
        return " + ".join(parts) if parts else "0"


def dx_density(d: MultiDensity, ctx) -> MultiDensity:
    """Total x-derivative; nonlocal factors differentiate into their
    defining local densities."""
    out = MultiDensity.zero(d.slots)
    for key, c in d.terms.items():
        out.add_term(key, ctx.dx_coeff(c))
        for pos, sym in enumerate(key):
            for repl, rc in ctx.dx_key(sym):
                nk = key[:pos] + (repl,) + key[pos + 1:]
                out.add_term(nk, c * rc)
    return out


def dx_density_n(d: MultiDensity, ctx, times: int) -> MultiDensity:
    for _ in range(times):
        d = dx_density(d, ctx)
    return d


_NF0_CAP = 1000


def _nf0(e: sp.Expr, ctx) -> tuple[sp.Expr, sp.Expr]:
    """Reduce a scalar differential polynomial modulo Im D_x.

    Returns (normal form, cofactor) with input = nf + D_x(cofactor).
    Integration by parts in the highest jet: a top-order jet u_i^(k) with
    coefficient c is eliminated by subtracting D_x(int c du_i^(k-1)) whenever
    that introduces only strictly lower jets (c free of all order-k jets and
    of u_j^(k-1) for j > i), so the reduction terminates; densities outside
    the reachable set are returned unchanged.
    """
    space = ctx.space
    cof = sp.Integer(0)
    for _ in range(_NF0_CAP):
        e = sp.cancel(sp.together(e))
        order = space.order_of(e)
        if order == 0:
            break
        tops = [space.jet(j, order).sym for j in range(1, space.n + 1)]
        done = True
        for i in range(space.n, 0, -1):
            z = tops[i - 1]
            if not e.has(z):
                continue
            c = sp.diff(e, z)
            if c == 0 or any(c.has(t) for t in tops):
                continue
            if any(c.has(space.jet(j, order - 1).sym)
                   for j in range(i + 1, space.n + 1)):
                continue
            y = space.jet(i, order - 1).sym
            F = sp.integrate(c, y)
            if F.has(sp.log) or F.has(sp.atan):
                continue
            e = sp.cancel(e - space.dx(F))
            cof += F
            done = False
            break
        if done:
            break
    return sp.cancel(sp.together(e)), cof


def normalize_density(d: MultiDensity, ctx) -> tuple[MultiDensity, MultiDensity]:
    """Canonical form modulo Im D_x, with cofactor.

    Returns (nf, cof) with d = nf + D_x(cof) (exactly, as densities).
    """
    if not d.slots:
        ((key, e),) = d.terms.items() if d.terms else (((), sp.Integer(0)),)
        nf_e, cof_e = _nf0(e, ctx)
        return MultiDensity.scalar(nf_e), MultiDensity.scalar(cof_e)
    s = d.slots[-1]
    cof = MultiDensity.zero(d.slots)
    work = d.copy()
    # stage A: strip derivatives off the slot-s covector
    while True:
        target = None
        best = None
        spos = work.slot_position(s)
        for key in work.terms:
            sym = key[spos]
            k = cov_order(sym)
            if k >= 1:
                rank = (k, default_sort_key(sym.sym))
                if best is None or rank > best:
                    best = rank
                    target = key
        if target is None:
            break
        pos = work.slot_position(s)
        sym = target[pos]
        c = work.terms.pop(target)
        c = sp.cancel(sp.together(c))
        if c == 0:
            continue
        lower_key = target[:pos] + target[pos + 1:]
        lower_slots = work.slots[:pos] + work.slots[pos + 1:]
        rest = MultiDensity(lower_slots, {lower_key: c})
        low_sym = ctx.cov_lower(sym)
        d_rest = dx_density(rest, ctx)
        for k2, c2 in d_rest.tensor_insert(s, low_sym).terms.items():
            work.add_term(k2, -c2)
        for k2, c2 in rest.tensor_insert(s, low_sym).terms.items():
            cof.add_term(k2, c2)
    # decompose by the slot-s factor
    nf = MultiDensity.zero(d.slots)
    groups = work.drop_slot(s)
    for sym in sorted(groups, key=lambda t: default_sort_key(t.sym)):
        low = groups[sym]
        if sym.kind == SymbolKind.COVECTOR:
            for k2, c2 in low.tensor_insert(s, sym).terms.items():
                nf.add_term(k2, c2)
        else:
            sub_nf, sub_cof = normalize_density(low, ctx)
            for k2, c2 in sub_nf.tensor_insert(s, sym).terms.items():
                nf.add_term(k2, c2)
            for k2, c2 in sub_cof.tensor_insert(s, sym).terms.items():
                cof.add_term(k2, c2)
            # defining relation pushes the cofactor into the covector sector
            for cov_sym, w in ctx.dx_key(sym):
                for k2, c2 in sub_cof.tensor_insert(s, cov_sym).terms.items():
                    nf.add_term(k2, -c2 * w)
    return nf.pruned(), cof
