"""Hamiltonianity and compatibility conditions, and the two searches.

First-order search (n = 3): the candidate metric is a conformal multiple of
the squared-Haantjes contraction, g_{ij} = f H_{ij}.  The search runs in
three steps: the symmetry check H_{ih} V^h_j = H_{jh} V^h_i, the conformal
factor solve (the covariant-constancy condition becomes linear in the
log-gradient p_k = d_k log f), and the curvature solve expressing R^{ij}_{kl}
through V with three constants (alpha, beta, gamma).

Third-order search (any n): a generic symmetric quadratic ansatz for h_{ij}
with the cyclic Monge constraint imposed as exact linear relations, then the
three compatibility families

    (e1)  h_{im} V^m_j = h_{jm} V^m_i,
    (e3)  c_{mkl} V^m_i + c_{mik} V^m_l + c_{mli} V^m_k = 0,
    (e2)  h_{ks} V^k_{ij} = c_{smj} V^m_i + c_{smi} V^m_j,

collected into one exact linear system over Q.

Sign parameters (such as lambda, mu with square one) are handled by
enumerating the sign cases and, where a single symbolic answer is wanted,
interpolating the per-case results on the character basis of products of the
parameters.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction

import sympy as sp
from sympy.core.sorting import default_sort_key

from .expr import ExprError, canonical
from .geometry import (
    Metric,
    SquareArray,
    Tensor3,
    VelocityMatrix,
    christoffel,
    christoffel_contravariant,
    covariant_derivative_11,
    haantjes_square_contraction,
    haantjes_tensor,
    invert_metric,
    riemann_curvature,
    velocity_matrix,
)
from .jet import JetSpace
from .linsolve import (
    InconsistentSystemError,
    LinRow,
    LinSystem,
    Solution,
    collect_coefficients,
    solve,
    solve_batched,
)
from .operators import third_order_c_tensors


class ConditionError(ExprError):
    pass


class ConformalSolveError(ConditionError):
    """No conformal factor: the log-gradient system is inconsistent."""


class NonClosedGradientError(ConditionError):
    """The log-gradient solution is not a closed one-form."""


class ReconstructionError(ConditionError):
    """The conformal factor is not a power product of the visible factors."""


def sign_cases(params) -> list[dict]:
    """All substitutions of +1/-1 for the given parameter symbols."""
    syms = [p if isinstance(p, sp.Symbol) else p.sym for p in params]
    if not syms:
        return [{}]
    return [dict(zip(syms, vals))
            for vals in itertools.product((1, -1), repeat=len(syms))]


def interpolate_signs(values: dict, params) -> sp.Expr:
    """The unique combination of square-free parameter monomials taking the
    given value at every sign case.

    ``values`` maps a sign tuple (one +-1 per parameter, in order) to an
    expression; the result lies in the span of products of distinct
    parameters, e.g. {1, lam, mu, lam*mu} for two parameters.
    """
    syms = [p if isinstance(p, sp.Symbol) else p.sym for p in params]
    k = len(syms)
    cases = list(itertools.product((1, -1), repeat=k))
    if set(values) != set(cases):
        raise ConditionError("need a value for every sign case")
    acc = sp.Integer(0)
    for subset in itertools.product((0, 1), repeat=k):
        mono = sp.prod(s for s, b in zip(syms, subset) if b)
        coeff = sp.Integer(0)
        for signs in cases:
            chi = sp.prod(sg for sg, b in zip(signs, subset) if b)
            coeff += chi * values[signs]
        acc += mono * coeff / (2 ** k)
    return canonical(acc)


def check_symmetry_gV(H: Metric, V: SquareArray) -> list:
    """Residuals H_{ih} V^h_j - H_{jh} V^h_i for i < j."""
    n = H.n
    rng = range(1, n + 1)
    out = []
    for i in rng:
        for j in range(i + 1, n + 1):
            r = canonical(sum(H[i, h] * V[h, j] - H[j, h] * V[h, i]
                              for h in rng))
            out.append(((i, j), r))
    return out


def _metric_inverse_matrix(H: Metric) -> sp.Matrix:
    Hm = H.to_matrix()
    return (Hm.adjugate() / Hm.det()).applyfunc(sp.cancel)


def _log_gradient_system(space: JetSpace, H: Metric, V: SquareArray, p,
                         Hu: sp.Matrix | None = None,
                         chrH2: Tensor3 | None = None):
    """Residuals of the covariant-constancy condition for g = f H, written
    with p_k = d_k log f; each residual is linear in the p_k.  Yields
    canonical residuals lazily (the system is heavily redundant)."""
    n = H.n
    rng = range(1, n + 1)
    if Hu is None:
        Hu = _metric_inverse_matrix(H)
    chrH = christoffel_contravariant(space, H, chrH2)
    pup = [sp.cancel(sum(Hu[i, s] * p[s] for s in range(n)))
           for i in range(n)]

    def gam(i, j, k):
        # f * Gamma^{ij}_k of the rescaled metric
        dj = sp.Integer(1) if j == k else sp.Integer(0)
        di = sp.Integer(1) if i == k else sp.Integer(0)
        return chrH[i, j, k] - sp.Rational(1, 2) * (
            Hu[i - 1, j - 1] * p[k - 1] + pup[i - 1] * dj - pup[j - 1] * di)

    for s in rng:
        for i in rng:
            for j in rng:
                e = canonical(sum(V[k, j] * gam(s, i, k) for k in rng)
                              - sum(V[s, k] * gam(k, i, j) for k in rng))
                if e != 0:
                    yield e


def _solve_linear_field(eqs, unknowns):
    """Solve equations linear in the unknowns over the rational-function
    field by incremental exact elimination; a unique solution is required.

    ``eqs`` may be lazy; consumption stops once the solution is pinned down
    (the full condition is re-verified by the downstream certificate).
    """
    unknowns = list(unknowns)
    m = len(unknowns)
    pivots: dict[int, list] = {}  # column -> reduced row [c_0..c_{m-1}, const]
    for e in eqs:
        num, den = sp.fraction(e)
        if den.free_symbols & set(unknowns):
            raise ConformalSolveError("system is not linear in the unknowns")
        poly = sp.Poly(num, *unknowns)
        if poly.total_degree() > 1:
            raise ConformalSolveError("system is not linear in the unknowns")
        row = [poly.coeff_monomial(q) for q in unknowns]
        row.append(poly.coeff_monomial(1))
        for col in range(m):
            piv = pivots.get(col)
            if piv is not None and row[col] != 0:
                fac = row[col]
                row = [sp.cancel(a - fac * b) for a, b in zip(row, piv)]
        lead = next((c for c in range(m) if row[c] != 0), None)
        if lead is None:
            if sp.cancel(row[m]) != 0:
                raise ConformalSolveError(
                    "log-gradient system has no solution")
            continue
        fac = row[lead]
        row = [sp.cancel(a / fac) for a in row]
        for col, piv in list(pivots.items()):
            if piv[lead] != 0:
                f2 = piv[lead]
                pivots[col] = [sp.cancel(a - f2 * b)
                               for a, b in zip(piv, row)]
        pivots[lead] = row
        if len(pivots) == m:
            break
    if len(pivots) != m:
        raise ConformalSolveError("log-gradient system is underdetermined")
    return [sp.cancel(-pivots[c][m]) for c in range(m)]


def _irreducible_candidates(exprs, fields):
    cands = set()
    for e in exprs:
        num, den = sp.fraction(sp.cancel(sp.together(e)))
        for poly in (num, den):
            if poly.free_symbols & set(fields):
                _, factors = sp.factor_list(poly, *fields)
                for base, _ in factors:
                    if base.free_symbols & set(fields):
                        cands.add(sp.primitive(sp.Poly(base, *fields))[1]
                                  .as_expr())
    return sorted(cands, key=default_sort_key)


def solve_conformal_factor(space: JetSpace, H: Metric, V: SquareArray):
    """(f, g) with g = f H satisfying the covariant-constancy condition.

    f is determined up to a nonzero constant; the representative returned is
    the power product of primitive irreducible factors with no extra scalar.
    """
    f, g, _, _ = _conformal_solve_data(space, H, V)
    return f, g


def _conformal_christoffel(space: JetSpace, H: Metric, psol,
                           Hu: sp.Matrix | None = None,
                           chrH2: Tensor3 | None = None) -> Tensor3:
    """Levi-Civita symbols of f H from those of H and p = grad log f."""
    n = H.n
    rng = range(1, n + 1)
    if chrH2 is None:
        chrH2 = christoffel(space, H)
    if Hu is None:
        Hu = _metric_inverse_matrix(H)
    pup = [sp.cancel(sp.together(sum(Hu[i, s] * psol[s] for s in range(n))))
           for i in range(n)]

    def d(i, j):
        return sp.Integer(1) if i == j else sp.Integer(0)

    ent = [[[canonical(chrH2[i, j, k] + sp.Rational(1, 2) * (
        d(i, j) * psol[k - 1] + d(i, k) * psol[j - 1]
        - pup[i - 1] * H[j, k]))
        for k in rng] for j in rng] for i in rng]
    return Tensor3(n, ent, canonicalize=False)


def _reconstruct_power_product(psol, cands, fields):
    """f with grad log f = psol as a power product of the candidate
    irreducible polynomials.

    The exponents satisfy psol_k = sum_m e_m d_k(q_m)/q_m, linear in the
    e_m over the rational-function field.  They are pinned down cheaply by
    exact evaluation at random rational points and the resulting candidate
    is verified symbolically; on any miss the full symbolic collection is
    used instead, so the fast path never changes the answer."""
    n = len(fields)
    exps = sp.symbols(f"_e1:{len(cands) + 1}")
    f = _sampled_exponents(psol, cands, fields, exps)
    if f is not None:
        return f
    idents = []
    for k in range(n):
        lhs = psol[k] - sum(e * sp.diff(q, fields[k]) / q
                            for e, q in zip(exps, cands))
        idents.append(sp.cancel(sp.together(lhs)))
    try:
        sol = solve(collect_coefficients(idents, exps))
    except InconsistentSystemError as exc:
        raise ReconstructionError(
            "log-gradient does not match any power product of the "
            "irreducible factors") from exc
    if sol.dimension != 0:
        raise ReconstructionError("conformal exponents underdetermined")
    return sp.prod(q ** sp.Rational(e)
                   for q, e in zip(cands, sol.particular))


def _rational_at(expr, point) -> Fraction:
    """Exact value of a rational function at a rational point; raises
    ZeroDivisionError when the point hits a pole."""
    v = sp.cancel(expr.subs(point, simultaneous=True))
    if not isinstance(v, sp.Rational):
        raise ZeroDivisionError
    return Fraction(int(v.p), int(v.q))


def _sampled_exponents(psol, cands, fields, exps):
    """Fast path of the exponent reconstruction; None when inconclusive."""
    n = len(fields)
    m = len(exps)
    rows = []
    rng = random.Random(20260824)
    grads = [[sp.cancel(sp.diff(q, fields[k]) / q) for k in range(n)]
             for q in cands]
    for _ in range(12):
        point = {x: sp.Rational(rng.randint(2, 97), rng.randint(1, 7))
                 for x in fields}
        try:
            row_vals = []
            for k in range(n):
                coeffs = {}
                for i in range(m):
                    coeffs[i] = _rational_at(grads[i][k], point)
                row_vals.append((coeffs, -_rational_at(psol[k], point)))
            for coeffs, const in row_vals:
                coeffs = {i: c for i, c in coeffs.items() if c != 0}
                rows.append(LinRow.make(coeffs, const))
        except (ZeroDivisionError, TypeError):
            continue
        if len(rows) >= m + n:
            break
    if len(rows) < m:
        return None
    try:
        sol = solve(LinSystem(list(exps), rows))
    except InconsistentSystemError:
        return None
    if sol.dimension != 0:
        return None
    f = sp.prod(q ** sp.Rational(e) for q, e in zip(cands, sol.particular))
    for k in range(n):
        if sp.cancel(psol[k] - sp.diff(f, fields[k]) / f) != 0:
            return None
    return f


def _conformal_solve_data(space: JetSpace, H: Metric, V: SquareArray):
    """(f, g, chr2, gu): the factor, g = f H covariant, its Levi-Civita
    symbols and its contravariant form H^{-1}/f."""
    n = H.n
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]
    p = sp.symbols(f"_p1:{n + 1}")
    Hu = _metric_inverse_matrix(H)
    HuM = Metric(n, [[Hu[i, j] for j in range(n)] for i in range(n)],
                 "contravariant", canonicalize=False)
    chrH2 = christoffel(space, H, gu=HuM)
    eqs = _log_gradient_system(space, H, V, p, Hu=Hu, chrH2=chrH2)
    psol = _solve_linear_field(eqs, p)
    for k in range(n):
        for l in range(k + 1, n):
            closed = sp.cancel(sp.diff(psol[k], fields[l])
                               - sp.diff(psol[l], fields[k]))
            if closed != 0:
                raise NonClosedGradientError(
                    f"d_{l + 1} p_{k + 1} != d_{k + 1} p_{l + 1}")
    cands = _irreducible_candidates(psol, fields)
    f = _reconstruct_power_product(psol, cands, fields)
    g = Metric(n, [[canonical(f * H[i, j]) for j in range(1, n + 1)]
                   for i in range(1, n + 1)], "covariant")
    gu = Metric(n, [[canonical(Hu[i, j] / f) for j in range(n)]
                    for i in range(n)], "contravariant", canonicalize=False)
    return (canonical(f), g,
            _conformal_christoffel(space, H, psol, Hu=Hu, chrH2=chrH2), gu)


def solve_curvature_constants(space: JetSpace, g: Metric, V: SquareArray,
                              chr2: Tensor3 | None = None,
                              R=None):
    """(alpha, beta, gamma) expressing the curvature of g through V.

    The residuals of the curvature condition are collected into an exact
    linear system for the three constants; the returned triple satisfies
    every residual identically (inconsistency raises).
    """
    al, be, ga = sp.symbols("_alpha _beta _gamma")
    idents = [r for _, r in
              _curvature_residuals(space, g, V, al, be, ga, chr2=chr2, R=R)]
    try:
        sol = solve(collect_coefficients(idents, (al, be, ga)))
    except InconsistentSystemError as exc:
        raise ConditionError(
            "no constants express the curvature through V") from exc
    vals = dict(zip(sol.unknowns, sol.particular))
    return tuple(sp.Rational(vals[s]) for s in (al, be, ga))


def _curvature_residuals(space: JetSpace, g: Metric, V: SquareArray,
                         al, be, ga, chr2: Tensor3 | None = None,
                         R=None) -> list:
    """Tagged residuals ((i, j, k, l), expr) of the curvature condition for
    the independent index combinations i < j, k < l (both sides are
    antisymmetric in each pair, so these exhaust the condition)."""
    n = g.n
    rng = range(1, n + 1)
    if R is None:
        R = riemann_curvature(space, g, chr2)

    def d(i, j):
        return sp.Integer(1) if i == j else sp.Integer(0)

    out = []
    for i in rng:
        for j in range(i + 1, n + 1):
            for k in rng:
                for l in range(k + 1, n + 1):
                    rhs = (al * (V[i, k] * V[j, l] - V[i, l] * V[j, k])
                           + be * (V[i, k] * d(j, l) - V[j, k] * d(i, l)
                                   - V[i, l] * d(j, k) + V[j, l] * d(i, k))
                           + ga * (d(i, k) * d(j, l) - d(i, l) * d(j, k)))
                    out.append(((i, j, k, l), R[i, j, k, l] - rhs))
    return out


@dataclass
class FirstOrderCertificate:
    """A first-order weakly nonlocal Hamiltonian structure for a system.

    ``g`` is covariant; residuals hold the three condition families (metric
    symmetry with V, covariant symmetry of V, curvature identity), each as a
    list of (indices, expression).
    """

    g: Metric
    alpha: sp.Expr
    beta: sp.Expr
    gamma: sp.Expr
    residuals: dict = field(default_factory=dict)

    def valid(self, cases: list[dict] | None = None) -> bool:
        for fam in self.residuals.values():
            for _, r in fam:
                for case in (cases or [{}]):
                    if sp.cancel(sp.together(
                            sp.sympify(r).subs(case, simultaneous=True))) != 0:
                        return False
        return True


def certificate_residuals(space: JetSpace, g: Metric, V: SquareArray,
                          alpha, beta, gamma, chr2: Tensor3 | None = None,
                          R=None) -> dict:
    """Residual families of the three first-order conditions for (g, V).

    Each family lists only the independent index combinations: the metric
    symmetry g^{ik} V^j_k = g^{jk} V^i_k is checked in its equivalent
    covariant form g_{ik} V^k_j = g_{jk} V^k_i (same statement, no
    inversion), the covariant-derivative symmetry for j < k, the curvature
    condition for i < j, k < l.
    """
    n = g.n
    rng = range(1, n + 1)
    gl = invert_metric(g) if g.variance == "contravariant" else g
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]
    if chr2 is None:
        chr2 = christoffel(space, gl)
    sym = []
    for i in rng:
        for j in range(i + 1, n + 1):
            sym.append(((i, j), canonical(
                sum(gl[i, k] * V[k, j] - gl[j, k] * V[k, i] for k in rng))))
    # (nabla_k V)^i_j - (nabla_j V)^i_k; the Gamma^s_{kj} V^i_s terms cancel
    nab_sym = []
    for i in rng:
        for j in rng:
            for k in range(j + 1, n + 1):
                r = (sp.diff(V[i, j], fields[k - 1])
                     - sp.diff(V[i, k], fields[j - 1])
                     + sum(chr2[i, k, s] * V[s, j] - chr2[i, j, s] * V[s, k]
                           for s in rng))
                nab_sym.append(((i, j, k), canonical(r)))
    al, be, ga = sp.sympify(alpha), sp.sympify(beta), sp.sympify(gamma)
    curv = [(idx, canonical(r)) for idx, r in _curvature_residuals(
        space, gl, V, al, be, ga, chr2=chr2, R=R)]
    return {"metric-symmetry": sym, "covariant-symmetry": nab_sym,
            "curvature": curv}


def check_first_order_hamiltonian(cert: FirstOrderCertificate,
                                  space: JetSpace, V: SquareArray,
                                  cases: list[dict] | None = None) -> bool:
    """True iff all three condition families vanish (per sign case)."""
    res = certificate_residuals(space, cert.g, V,
                                cert.alpha, cert.beta, cert.gamma)
    probe = FirstOrderCertificate(cert.g, cert.alpha, cert.beta, cert.gamma,
                                  res)
    return probe.valid(cases)


@dataclass
class FirstOrderSearchResult:
    """Per-sign-case certificates plus interpolated symbolic constants."""

    params: list
    cases: dict
    alpha: sp.Expr
    beta: sp.Expr
    gamma: sp.Expr
    conformal_factors: dict

    def case(self, signs) -> FirstOrderCertificate:
        return self.cases[tuple(signs)]


def find_first_order(space: JetSpace, fluxes, params=()) -> FirstOrderSearchResult:
    """Three-step first-order search, one run per parameter sign case.

    Raises if the symmetry check fails, the conformal solve fails, or the
    constants cannot be found for some case.
    """
    syms = [p if isinstance(p, sp.Symbol) else p.sym for p in params]
    from .expr import RationalExpr
    flux_exprs = [f.e if isinstance(f, RationalExpr) else sp.sympify(f)
                  for f in fluxes]
    certs = {}
    consts = {}
    fdict = {}
    for signs in itertools.product((1, -1), repeat=len(syms)):
        case = dict(zip(syms, signs))
        fl = [canonical(e.subs(case, simultaneous=True)) for e in flux_exprs]
        V = velocity_matrix(space, fl)
        H = haantjes_square_contraction(haantjes_tensor(space, V))
        bad = [(ij, r) for ij, r in check_symmetry_gV(H, V) if r != 0]
        if bad:
            raise ConditionError(
                f"candidate metric symmetry fails at {bad[0][0]} "
                f"for signs {signs}")
        f, g, chr2, gu = _conformal_solve_data(space, H, V)
        R = riemann_curvature(space, g, chr2, gu=gu)
        a, b, c = solve_curvature_constants(space, g, V, chr2=chr2, R=R)
        res = certificate_residuals(space, g, V, a, b, c, chr2=chr2, R=R)
        certs[signs] = FirstOrderCertificate(g, a, b, c, res)
        consts[signs] = (a, b, c)
        fdict[signs] = f
    alpha = interpolate_signs({s: v[0] for s, v in consts.items()}, syms)
    beta = interpolate_signs({s: v[1] for s, v in consts.items()}, syms)
    gamma = interpolate_signs({s: v[2] for s, v in consts.items()}, syms)
    return FirstOrderSearchResult(list(syms), certs, alpha, beta, gamma,
                                  fdict)


# --- third-order search -----------------------------------------------------


@dataclass
class MongeAnsatz:
    """Generic symmetric quadratic ansatz for h_{ij} with the cyclic
    derivative constraint recorded as linear relations on the unknowns."""

    space: JetSpace
    entries: list
    unknowns: list
    constraints: LinSystem

    @property
    def n(self) -> int:
        return self.space.n

    def dimension(self) -> int:
        return solve(self.constraints).dimension

    def instantiate(self, values: dict) -> Metric:
        n = self.n
        return Metric(n, [[sp.expand(self.entries[i][j].subs(values))
                           for j in range(n)] for i in range(n)], "covariant")


def _cyclic_constraints(space: JetSpace, entries, unknowns) -> LinSystem:
    n = space.n
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]
    idents = []
    rng = range(n)
    for m in rng:
        for k in rng:
            for s in rng:
                idents.append(sp.diff(entries[m][k], fields[s])
                              + sp.diff(entries[k][s], fields[m])
                              + sp.diff(entries[m][s], fields[k]))
    return collect_coefficients(idents, unknowns).dedup()


def monge_ansatz(space: JetSpace) -> MongeAnsatz:
    """Quadratic-line-complex ansatz with M(M+1)/2 unknown constants.

    The entries are built from the line coordinates of the curve
    (1, u^1, ..., u^n): with P^{0k}_i = delta_{ki} and
    P^{kl}_i = u^k delta_{li} - u^l delta_{ki}, every symmetric bilinear
    combination of the P's satisfies the cyclic derivative condition
    identically, so the recorded constraint system collapses to nothing and
    the solution-space dimension is the full unknown count.
    """
    n = space.n
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]
    pairs = [(a, b) for a in range(n + 1) for b in range(a + 1, n + 1)]

    def line_coord(pair, i):
        a, b = pair
        if a == 0:
            return sp.Integer(1) if b == i else sp.Integer(0)
        da = sp.Integer(1) if a == i else sp.Integer(0)
        db = sp.Integer(1) if b == i else sp.Integer(0)
        return fields[a - 1] * db - fields[b - 1] * da

    unknowns = []
    entries = [[sp.Integer(0)] * n for _ in range(n)]
    for A in range(len(pairs)):
        for B in range(A, len(pairs)):
            q = sp.Symbol(f"_q_{A + 1}_{B + 1}")
            unknowns.append(q)
            for i in range(n):
                for j in range(n):
                    t = line_coord(pairs[A], i + 1) * line_coord(pairs[B], j + 1)
                    if A != B:
                        t += line_coord(pairs[B], i + 1) * \
                            line_coord(pairs[A], j + 1)
                    entries[i][j] += q * sp.expand(t)
    constraints = _cyclic_constraints(space, entries, unknowns)
    ordered = sorted(unknowns, key=default_sort_key)
    constraints.unknowns = ordered
    return MongeAnsatz(space, entries, ordered, constraints)


def generic_quadratic_ansatz(space: JetSpace) -> MongeAnsatz:
    """Generic symmetric quadratic ansatz with the cyclic condition imposed
    as exact linear constraints.

    Unlike the line-complex ansatz this parametrizes the Monge metrics
    bijectively, so the third-order search over it yields honest solution
    dimensions; its constrained dimension is smaller than the line-complex
    unknown count by the number of quadric relations among line coordinates.
    """
    n = space.n
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]
    monos = [sp.Integer(1)] + list(fields) + [
        fields[a] * fields[b] for a in range(n) for b in range(a, n)]
    unknowns = []
    entries = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            e = sp.Integer(0)
            for m, mono in enumerate(monos):
                q = sp.Symbol(f"_q_{i + 1}_{j + 1}_{m}")
                unknowns.append(q)
                e += q * mono
            entries[i][j] = e
            entries[j][i] = e
    constraints = _cyclic_constraints(space, entries, unknowns)
    return MongeAnsatz(space, entries, constraints.unknowns, constraints)


@dataclass
class CompatibilitySystem:
    """Tagged compatibility identities plus the collected linear system
    (which always includes the Monge constraints)."""

    ansatz: MongeAnsatz
    V: SquareArray
    identities: list  # (family, indices, expr)
    system: LinSystem

    @property
    def identity_count(self) -> int:
        return len(self.identities)


def _compat_identities(ansatz: MongeAnsatz, V: SquareArray) -> list:
    space = ansatz.space
    n = ansatz.n
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]
    h = ansatz.entries
    rng = range(n)
    # c_{ijk} from the ansatz; linear in the unknowns
    c = [[[sp.Rational(1, 3) * (sp.diff(h[i][k], fields[j])
                                - sp.diff(h[i][j], fields[k]))
           for k in rng] for j in rng] for i in rng]
    out = []
    for i in rng:
        for j in rng:
            out.append(("e1", (i + 1, j + 1), sum(
                h[i][m] * V[m + 1, j + 1] - h[j][m] * V[m + 1, i + 1]
                for m in rng)))
    for i in rng:
        for k in rng:
            for l in rng:
                out.append(("e3", (i + 1, k + 1, l + 1), sum(
                    c[m][k][l] * V[m + 1, i + 1]
                    + c[m][i][k] * V[m + 1, l + 1]
                    + c[m][l][i] * V[m + 1, k + 1] for m in rng)))
    Vjac = [[[sp.diff(V[k + 1, i + 1], fields[j]) for j in rng]
             for i in rng] for k in rng]
    for s in rng:
        for i in rng:
            for j in rng:
                lhs = sum(h[k][s] * Vjac[k][i][j] for k in rng)
                rhs = sum(c[s][m][j] * V[m + 1, i + 1]
                          + c[s][m][i] * V[m + 1, j + 1] for m in rng)
                out.append(("e2", (s + 1, i + 1, j + 1), lhs - rhs))
    return out


def assemble_compatibility_system(ansatz: MongeAnsatz,
                                  V: SquareArray) -> CompatibilitySystem:
    """All three compatibility families over the full index ranges."""
    idents = _compat_identities(ansatz, V)
    collected = collect_coefficients([e for _, _, e in idents],
                                     ansatz.unknowns)
    collected.unknowns = ansatz.unknowns
    rows = list(ansatz.constraints.rows) + list(collected.rows)
    system = LinSystem(ansatz.unknowns, rows).dedup()
    return CompatibilitySystem(ansatz, V, idents, system)


def restrict_compatibility_system(cs: CompatibilitySystem,
                                  m: int) -> LinSystem:
    """Monge constraints plus only the h V symmetry identities with all
    indices bounded by m (a cheap first batch)."""
    idents = [e for fam, idx, e in cs.identities
              if fam == "e1" and max(idx) <= m]
    collected = collect_coefficients(idents, cs.ansatz.unknowns)
    rows = list(cs.ansatz.constraints.rows) + list(collected.rows)
    sysr = LinSystem(cs.ansatz.unknowns, rows).dedup()
    return sysr


@dataclass
class ThirdOrderReport:
    """Residual report for the canonical third-order conditions."""

    monge_violations: list
    closure_violations: list

    @property
    def passed(self) -> bool:
        return not self.monge_violations and not self.closure_violations


def check_third_order_hamiltonian(space: JetSpace,
                                  h: Metric) -> ThirdOrderReport:
    """Exact verification of the cyclic Monge condition and the quadratic
    closure condition c_{msk,l} = -h^{pq} c_{pml} c_{qsk}."""
    n = h.n
    if h.variance != "covariant":
        h = invert_metric(h)
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]
    rng = range(1, n + 1)
    monge = []
    for m in rng:
        for k in rng:
            for s in rng:
                r = canonical(sp.diff(h[m, k], fields[s - 1])
                              + sp.diff(h[k, s], fields[m - 1])
                              + sp.diff(h[m, s], fields[k - 1]))
                if r != 0:
                    monge.append(((m, k, s), r))
    closure = []
    if not monge:
        c_lo, _, hu = third_order_c_tensors(space, h)
        for m in rng:
            for s in rng:
                for k in rng:
                    for l in rng:
                        r = canonical(
                            sp.diff(c_lo[m - 1][s - 1][k - 1], fields[l - 1])
                            + sum(hu[p, q] * c_lo[p - 1][m - 1][l - 1]
                                  * c_lo[q - 1][s - 1][k - 1]
                                  for p in rng for q in rng))
                        if r != 0:
                            closure.append(((m, s, k, l), r))
    return ThirdOrderReport(monge, closure)


@dataclass
class ThirdOrderSearchResult:
    """Per-sign-case solution rays and the interpolated symbolic metric."""

    params: list
    dimensions: dict
    cases: dict        # signs -> Metric (normalized representative)
    h: Metric | None   # symbolic interpolation; None when params empty? no:
                       # always set when every case has dimension one
    reports: dict

    def case(self, signs) -> Metric:
        return self.cases[tuple(signs)]


def _ray_scale(ansatz: MongeAnsatz, vectors, vec, normalize, fields):
    if normalize is None:
        for idx in range(len(ansatz.unknowns)):
            if all(v[idx] != 0 for v in vectors.values()):
                return vec[idx]
        raise ConditionError("solution rays share no nonzero coordinate")
    i, j, mono = normalize
    raw = ansatz.instantiate(dict(zip(ansatz.unknowns, vec)))
    coeff = sp.Poly(raw[i, j], *fields).coeff_monomial(sp.sympify(mono))
    if coeff in (None, 0):
        raise ConditionError(
            f"designated coefficient ({i},{j}) {mono} vanishes on the ray")
    from fractions import Fraction
    coeff = sp.Rational(coeff)
    return Fraction(coeff.p, coeff.q)


def find_third_order(space: JetSpace, fluxes, params=(),
                     batch_size: int | None = None,
                     checkpoint_path: str | None = None,
                     normalize: tuple | None = None) -> ThirdOrderSearchResult:
    """Monge-ansatz search for the canonical third-order operator metric.

    Solves the compatibility system per sign case; when every case yields a
    one-dimensional ray, the rays are normalized consistently and
    interpolated into a single symbolic metric.  ``normalize`` designates the
    unit coefficient as (i, j, monomial in the field variables); by default
    the first ansatz coefficient that is nonzero in every case is scaled to
    one.
    """
    from .expr import RationalExpr
    syms = [p if isinstance(p, sp.Symbol) else p.sym for p in params]
    flux_exprs = [f.e if isinstance(f, RationalExpr) else sp.sympify(f)
                  for f in fluxes]
    ansatz = generic_quadratic_ansatz(space)
    dims = {}
    rays = {}
    for signs in itertools.product((1, -1), repeat=len(syms)):
        case = dict(zip(syms, signs))
        fl = [canonical(e.subs(case, simultaneous=True)) for e in flux_exprs]
        V = velocity_matrix(space, fl)
        cs = assemble_compatibility_system(ansatz, V)
        if batch_size:
            sol = solve_batched(cs.system, batch_size,
                                checkpoint_path=checkpoint_path)
        else:
            sol = solve(cs.system)
        dims[signs] = sol.dimension
        rays[signs] = sol
    h_cases = {}
    reports = {}
    h_sym = None
    if all(d == 1 for d in dims.values()):
        vectors = {s: sol.basis[0] for s, sol in rays.items()}
        fields = [space.jet(j, 0).sym for j in range(1, space.n + 1)]
        for signs, vec in vectors.items():
            scale = _ray_scale(ansatz, vectors, vec, normalize, fields)
            values = {q: sp.Rational(v / scale)
                      for q, v in zip(ansatz.unknowns, vec)}
            h = ansatz.instantiate(values)
            h_cases[signs] = h
            reports[signs] = check_third_order_hamiltonian(space, h)
        if syms:
            n = space.n
            ent = [[interpolate_signs(
                {s: h_cases[s][i, j] for s in h_cases}, syms)
                for j in range(1, n + 1)] for i in range(1, n + 1)]
            h_sym = Metric(n, ent, "covariant")
        else:
            h_sym = h_cases[()]
    return ThirdOrderSearchResult(list(syms), dims, h_cases, h_sym, reports)
