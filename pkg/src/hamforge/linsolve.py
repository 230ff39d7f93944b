"""Exact coefficient collection and sparse linear solving over Q.

Identities that are polynomial in the field variables and linear in a set of
unknown constants are turned into sparse rows (one per monomial), solved by
deterministic exact Gaussian elimination, optionally batch by batch with
checkpointing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import sympy as sp
from sympy.core.sorting import default_sort_key

from .expr import ExprError, RationalExpr


class CollectError(ExprError):
    pass


class InconsistentSystemError(ExprError):
    def __init__(self, message, witness=None, batch_index=None):
        super().__init__(message)
        self.witness = witness
        self.batch_index = batch_index


@dataclass(frozen=True)
class LinRow:
    """coeffs . x + const = 0 with sparse rational coefficients."""

    coeffs: tuple[tuple[int, Fraction], ...]
    const: Fraction = Fraction(0)

    def as_dict(self) -> dict[int, Fraction]:
        return dict(self.coeffs)

    @staticmethod
    def make(coeffs: dict[int, Fraction], const=Fraction(0)) -> "LinRow":
        items = tuple(sorted((i, Fraction(c)) for i, c in coeffs.items()
                             if c != 0))
        return LinRow(items, Fraction(const))

    def is_trivial(self) -> bool:
        return not self.coeffs and self.const == 0


@dataclass
class LinSystem:
    """Sparse exact linear system over Q in the given unknowns."""

    unknowns: list[sp.Symbol]
    rows: list[LinRow] = field(default_factory=list)
    history: list[tuple[int, Fraction]] = field(default_factory=list)

    def dedup(self) -> "LinSystem":
        seen = set()
        rows = []
        for r in self.rows:
            if r.is_trivial():
                continue
            key = (r.coeffs, r.const)
            if key not in seen:
                seen.add(key)
                rows.append(r)
        return LinSystem(self.unknowns, rows, list(self.history))


@dataclass
class Solution:
    """Affine solution space: particular + span of homogeneous basis."""

    unknowns: list[sp.Symbol]
    particular: list[Fraction]
    basis: list[list[Fraction]]

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def as_exprs(self, free_symbols: Sequence[sp.Symbol] | None = None):
        """Each unknown as particular + sum(t_m * basis_m)."""
        if free_symbols is None:
            free_symbols = [sp.Symbol(f"t{m + 1}") for m in range(len(self.basis))]
        out = []
        for i in range(len(self.unknowns)):
            e = sp.Rational(self.particular[i])
            for m, b in enumerate(self.basis):
                e += sp.Rational(b[i]) * free_symbols[m]
            out.append(e)
        return out


def collect_coefficients(identities: Sequence, unknowns: Sequence[sp.Symbol],
                         ) -> LinSystem:
    """One linear row per (identity, monomial); duplicates removed.

    Each identity must, after clearing its denominator, be polynomial in the
    non-unknown symbols and linear in the unknowns.
    """
    unknown_set = {u if isinstance(u, sp.Symbol) else u.sym for u in unknowns}
    unknown_index = {u: i for i, u in enumerate(sorted(
        unknown_set, key=default_sort_key))}
    ordered = sorted(unknown_set, key=default_sort_key)
    rows_by_monomial: dict[tuple, dict] = {}
    order = []
    for ident in identities:
        e = ident.e if isinstance(ident, RationalExpr) else sp.sympify(ident)
        if e == 0:
            continue
        num, den = sp.fraction(sp.cancel(sp.together(e)))
        if den.free_symbols & unknown_set:
            raise CollectError("identity is not linear in the unknowns "
                               "(unknowns in denominator)")
        num = sp.expand(num)
        terms = num.args if num.is_Add else (num,)
        local: dict[sp.Expr, dict] = {}
        for term in terms:
            coeff = sp.Integer(1)
            monomial = sp.Integer(1)
            unk = None
            factors = term.args if term.is_Mul else (term,)
            for f in factors:
                base, exp = (f.base, f.exp) if f.is_Pow else (f, 1)
                if base in unknown_set:
                    if unk is not None or exp != 1:
                        raise CollectError(
                            f"identity nonlinear in unknowns: term {term}")
                    unk = base
                elif f.is_Rational:
                    coeff *= f
                else:
                    if f.free_symbols & unknown_set:
                        raise CollectError(
                            f"identity nonlinear in unknowns: term {term}")
                    monomial *= f
            row = local.setdefault(monomial, {})
            if unk is None:
                row["const"] = row.get("const", Fraction(0)) + Fraction(
                    coeff.p, coeff.q)
            else:
                idx = unknown_index[unk]
                row[idx] = row.get(idx, Fraction(0)) + Fraction(coeff.p, coeff.q)
        for monomial in sorted(local, key=default_sort_key):
            row = local[monomial]
            const = row.pop("const", Fraction(0))
            lin = LinRow.make(row, const)
            if lin.is_trivial():
                continue
            key = (lin.coeffs, lin.const)
            if key not in rows_by_monomial:
                rows_by_monomial[key] = lin
                order.append(lin)
    return LinSystem(ordered, order)


def _row_sort_key(row: LinRow):
    return (len(row.coeffs), row.coeffs, row.const)


class _Eliminator:
    """Incremental deterministic RREF over Q.

    Pivots are assigned to the first live unknown in declaration order; among
    candidate rows the smallest in canonical order wins.
    """

    def __init__(self, n_unknowns: int):
        self.n = n_unknowns
        self.pivots: dict[int, LinRow] = {}  # unknown index -> normalized row

    def _reduce(self, row: LinRow) -> LinRow:
        coeffs = row.as_dict()
        const = row.const
        changed = True
        while changed:
            changed = False
            for idx in sorted(coeffs):
                piv = self.pivots.get(idx)
                if piv is None:
                    continue
                fac = coeffs[idx]
                for j, c in piv.coeffs:
                    coeffs[j] = coeffs.get(j, Fraction(0)) - fac * c
                    if coeffs[j] == 0:
                        del coeffs[j]
                const -= fac * piv.const
                changed = True
                break
        return LinRow.make(coeffs, const)

    def add_rows(self, rows: list[LinRow]):
        pending = sorted(rows, key=_row_sort_key)
        for row in pending:
            row = self._reduce(row)
            if not row.coeffs:
                if row.const != 0:
                    raise InconsistentSystemError(
                        "inconsistent linear system", witness=row)
                continue
            lead, lead_c = row.coeffs[0]
            norm = LinRow.make(
                {i: c / lead_c for i, c in row.coeffs}, row.const / lead_c)
            # back-substitute into existing pivot rows
            for idx, piv in list(self.pivots.items()):
                d = piv.as_dict()
                if lead in d:
                    fac = d.pop(lead)
                    for j, c in norm.coeffs:
                        if j != lead:
                            d[j] = d.get(j, Fraction(0)) - fac * c
                            if d[j] == 0:
                                del d[j]
                    self.pivots[idx] = LinRow.make(d, piv.const - fac * norm.const)
            self.pivots[lead] = norm

    def solution(self, unknowns: list[sp.Symbol]) -> Solution:
        free = [i for i in range(self.n) if i not in self.pivots]
        particular = [Fraction(0)] * self.n
        for idx, row in self.pivots.items():
            particular[idx] = -row.const
        basis = []
        for f in free:
            vec = [Fraction(0)] * self.n
            vec[f] = Fraction(1)
            for idx, row in self.pivots.items():
                d = row.as_dict()
                if f in d:
                    vec[idx] = -d[f]
            basis.append(vec)
        return Solution(list(unknowns), particular, basis)


def solve(system: LinSystem) -> Solution:
    """Exact reduced-row-echelon solve; inconsistency raises with a witness."""
    elim = _Eliminator(len(system.unknowns))
    elim.add_rows(system.rows)
    return elim.solution(system.unknowns)


def solve_batched(system: LinSystem, batch_size: int,
                  verifier: Callable[[Solution], bool] | None = None,
                  checkpoint_path: str | None = None) -> Solution:
    """Solve batch by batch, checkpointing partial eliminations.

    The final solution is verified against the full original system (via the
    ``verifier`` callback when given, otherwise by direct residual check).
    """
    if batch_size < 1:
        raise ExprError("batch_size must be >= 1")
    elim = _Eliminator(len(system.unknowns))
    rows = list(system.rows)
    for b, start in enumerate(range(0, len(rows), batch_size)):
        batch = rows[start:start + batch_size]
        try:
            elim.add_rows(batch)
        except InconsistentSystemError as exc:
            raise InconsistentSystemError(
                f"inconsistency in batch {b}", witness=exc.witness,
                batch_index=b) from exc
        if checkpoint_path is not None:
            _write_checkpoint(checkpoint_path, system, elim, b)
    sol = elim.solution(system.unknowns)
    if verifier is not None:
        if not verifier(sol):
            raise InconsistentSystemError("batched solution failed full-system "
                                          "verification")
    else:
        bad = residual_witness(system, sol)
        if bad is not None:
            raise InconsistentSystemError("batched solution failed full-system "
                                          "verification", witness=bad)
    return sol


def residual_witness(system: LinSystem, sol: Solution) -> LinRow | None:
    """First row not satisfied by the whole affine solution space."""
    for row in system.rows:
        d = row.as_dict()
        r = row.const + sum(c * sol.particular[i] for i, c in d.items())
        if r != 0:
            return row
        for vec in sol.basis:
            if sum(c * vec[i] for i, c in d.items()) != 0:
                return row
    return None


def _write_checkpoint(path: str, system: LinSystem, elim: _Eliminator,
                      batch_index: int):
    """Checkpoint in the session document format: resolved pivots (the
    unknowns already reduced to constants), the remaining reduced rows, and
    the batch index."""
    lines = ["hamforge-session v1", "", "[workspace]", "fields 1", "[end]",
             "", "[artifact checkpoint]", "kind checkpoint",
             f"batch-index = {batch_index}"]
    for idx, row in sorted(elim.pivots.items()):
        name = str(system.unknowns[idx])
        if not row.coeffs[1:]:
            lines.append(f"resolved {name} = {-row.const}")
        else:
            terms = " + ".join(f"{c}*{system.unknowns[j]}"
                               for j, c in row.coeffs[1:])
            lines.append(f"pivot {name} = {-row.const} - ({terms})")
    lines.append("[end]")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def same_solution_space(a: Solution, b: Solution) -> bool:
    """Exact equality of affine solution spaces."""
    if a.dimension != b.dimension:
        return False

    def contains(space: Solution, point: list[Fraction], homogeneous: bool):
        # solve span membership exactly by elimination
        n = len(point)
        cols = space.basis
        target = list(point) if homogeneous else [
            point[i] - space.particular[i] for i in range(n)]
        # Gaussian elimination on the small (n x dim) system
        rows = [[cols[m][i] for m in range(len(cols))] + [target[i]]
                for i in range(n)]
        m = len(cols)
        piv = 0
        for c in range(m):
            sel = None
            for r in range(piv, len(rows)):
                if rows[r][c] != 0:
                    sel = r
                    break
            if sel is None:
                continue
            rows[piv], rows[sel] = rows[sel], rows[piv]
            fac = rows[piv][c]
            rows[piv] = [x / fac for x in rows[piv]]
            for r in range(len(rows)):
                if r != piv and rows[r][c] != 0:
                    f = rows[r][c]
                    rows[r] = [x - f * y for x, y in zip(rows[r], rows[piv])]
            piv += 1
        return all(row[-1] == 0 for row in rows[piv:])

    if not contains(b, a.particular, homogeneous=False):
        return False
    if not contains(a, b.particular, homogeneous=False):
        return False
    return all(contains(b, v, homogeneous=True) for v in a.basis) and \
        all(contains(a, v, homogeneous=True) for v in b.basis)
