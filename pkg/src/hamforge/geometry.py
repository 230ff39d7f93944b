"""Tensor calculus on the manifold of field variables.

Velocity matrix of a flux vector, Nijenhuis and Haantjes tensors, metric
inversion, Levi-Civita Christoffel symbols (second and third kind), Riemann
curvature and covariant derivatives.  Everything is dense and exact; entries
are canonical sympy expressions in the field variables.

Index conventions (calibrated against the eta^4 data, see the conditions
module):

  N^i_{jk} = V^p_j d_p V^i_k - V^p_k d_p V^i_j - V^i_p (d_j V^p_k - d_k V^p_j)
  H^i_{jk} = N^i_{pq} V^p_j V^q_k - N^p_{jq} V^i_p V^q_k
             - N^p_{qk} V^i_p V^q_j + N^p_{jk} V^i_q V^q_p
  Gamma^i_{jk} = (1/2) g^{is} (d_j g_{sk} + d_k g_{sj} - d_s g_{jk})
  Gamma^{ij}_k = -g^{is} Gamma^j_{sk}
  R^i_{jkl} = d_l Gamma^i_{kj} - d_k Gamma^i_{lj}
              + Gamma^i_{ls} Gamma^s_{kj} - Gamma^i_{ks} Gamma^s_{lj}
  R^{ij}_{kl} = g^{is} R^j_{skl}
"""

from __future__ import annotations

import sympy as sp

from .expr import ExprError, RationalExpr, canonical
from .jet import DiffPoly, JetSpace


class SingularMetricError(ExprError):
    pass


def _as_expr(v):
    if isinstance(v, RationalExpr):
        return v.e
    if isinstance(v, DiffPoly):
        return v.expr.e
    return sp.sympify(v)


class SquareArray:
    """Dense n x n array of canonical expressions, 1-based indexing.

    ``canonicalize=False`` trusts the caller to pass canonical entries.
    """

    def __init__(self, n: int, entries, canonicalize: bool = True):
        self.n = n
        if canonicalize:
            self.m = [[canonical(_as_expr(entries[i][j])) for j in range(n)]
                      for i in range(n)]
        else:
            self.m = [[entries[i][j] for j in range(n)] for i in range(n)]

    def __getitem__(self, ij):
        i, j = ij
        return self.m[i - 1][j - 1]

    def row(self, i: int):
        return list(self.m[i - 1])

    def is_symmetric(self) -> bool:
        return all(self.m[i][j] == self.m[j][i]
                   for i in range(self.n) for j in range(i + 1, self.n))

    def det(self) -> sp.Expr:
        return canonical(sp.Matrix(self.m).det(method="berkowitz"))

    def to_matrix(self) -> sp.Matrix:
        return sp.Matrix(self.m)

    def map(self, fn) -> "SquareArray":
        return SquareArray(self.n, [[fn(e) for e in row] for row in self.m])

    def __eq__(self, other):
        return isinstance(other, SquareArray) and self.m == other.m


class VelocityMatrix(SquareArray):
    """Jacobian V^i_j of the flux vector; entries in field variables only."""


class Metric(SquareArray):
    """Symmetric nondegenerate matrix; variance 'covariant'/'contravariant'."""

    def __init__(self, n, entries, variance: str, canonicalize: bool = True):
        if variance not in ("covariant", "contravariant"):
            raise ExprError(f"bad variance {variance!r}")
        super().__init__(n, entries, canonicalize)
        self.variance = variance
        if not self.is_symmetric():
            raise ExprError("metric must be symmetric")


class Tensor3:
    """3-index array of canonical expressions, 1-based indexing."""

    def __init__(self, n: int, entries, canonicalize: bool = True):
        self.n = n
        if canonicalize:
            self.t = [[[canonical(_as_expr(entries[i][j][k]))
                        for k in range(n)]
                       for j in range(n)] for i in range(n)]
        else:
            self.t = [[[entries[i][j][k] for k in range(n)]
                       for j in range(n)] for i in range(n)]

    def __getitem__(self, ijk):
        i, j, k = ijk
        return self.t[i - 1][j - 1][k - 1]

    def is_antisymmetric_last_pair(self) -> bool:
        rng = range(1, self.n + 1)
        return all(self[i, j, k] == canonical(-self[i, k, j])
                   for i in rng for j in rng for k in rng if j <= k)


class Tensor4:
    def __init__(self, n: int, entries, canonicalize: bool = True):
        self.n = n
        if canonicalize:
            self.t = [[[[canonical(_as_expr(entries[i][j][k][l]))
                         for l in range(n)] for k in range(n)]
                       for j in range(n)] for i in range(n)]
        else:
            self.t = [[[[entries[i][j][k][l] for l in range(n)]
                        for k in range(n)]
                       for j in range(n)] for i in range(n)]

    def __getitem__(self, ijkl):
        i, j, k, l = ijkl
        return self.t[i - 1][j - 1][k - 1][l - 1]


def velocity_matrix(space: JetSpace, fluxes: list) -> VelocityMatrix:
    """V^i_j = d(flux^i)/d(u^j).  Fluxes must be free of jet variables."""
    if len(fluxes) != space.n:
        raise ExprError("flux count does not match field count")
    exprs = [_as_expr(f) for f in fluxes]
    for f in exprs:
        if space.has_positive_jets(f):
            raise ExprError("fluxes must depend on field variables only")
    n = space.n
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]
    return VelocityMatrix(
        n, [[sp.diff(exprs[i], fields[j]) for j in range(n)] for i in range(n)])


def nijenhuis_tensor(space: JetSpace, V: SquareArray) -> Tensor3:
    n = V.n
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]

    def d(e, j):
        return sp.diff(e, fields[j - 1])

    rng = range(1, n + 1)
    ent = [[[sum(V[p, j] * d(V[i, k], p) - V[p, k] * d(V[i, j], p)
                 - V[i, p] * (d(V[p, k], j) - d(V[p, j], k)) for p in rng)
             for k in rng] for j in rng] for i in rng]
    return Tensor3(n, ent)


def haantjes_tensor(space: JetSpace, V: SquareArray,
                    N: Tensor3 | None = None) -> Tensor3:
    if N is None:
        N = nijenhuis_tensor(space, V)
    n = V.n
    rng = range(1, n + 1)
    ent = [[[sum(N[i, p, q] * V[p, j] * V[q, k]
                 - N[p, j, q] * V[i, p] * V[q, k]
                 - N[p, q, k] * V[i, p] * V[q, j]
                 + N[p, j, k] * V[i, q] * V[q, p]
                 for p in rng for q in rng)
             for k in rng] for j in rng] for i in rng]
    return Tensor3(n, ent)


def haantjes_square_contraction(H: Tensor3) -> Metric:
    """H_{ij} = H^a_{ib} H^b_{ja}; symmetric by construction."""
    n = H.n
    rng = range(1, n + 1)
    ent = [[sum(H[a, i, b] * H[b, j, a] for a in rng for b in rng)
            for j in rng] for i in rng]
    return Metric(n, ent, "covariant")


def invert_metric(g: Metric) -> Metric:
    det = g.det()
    if det == 0:
        raise SingularMetricError("metric is degenerate")
    inv = g.to_matrix().adjugate() / det
    variance = "covariant" if g.variance == "contravariant" else "contravariant"
    return Metric(g.n, inv.tolist(), variance)


def _covariant(g: Metric) -> tuple[Metric, Metric]:
    """(g covariant, g contravariant)."""
    if g.variance == "covariant":
        return g, invert_metric(g)
    ginv = invert_metric(g)
    return ginv, g


def christoffel(space: JetSpace, g: Metric,
                gu: Metric | None = None) -> Tensor3:
    """Levi-Civita Gamma^i_{jk}.

    Pass a precomputed contravariant companion as gu to skip the inversion.
    """
    if gu is not None and g.variance == "covariant":
        gl = g
    else:
        gl, gu = _covariant(g)
    n = g.n
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]

    def d(e, j):
        return sp.diff(e, fields[j - 1])

    rng = range(1, n + 1)
    ent = [[[sp.Rational(1, 2) * sum(
        gu[i, s] * (d(gl[s, k], j) + d(gl[s, j], k) - d(gl[j, k], s))
        for s in rng)
        for k in rng] for j in rng] for i in rng]
    return Tensor3(n, ent)


def christoffel_contravariant(space: JetSpace, g: Metric,
                              chr2: Tensor3 | None = None,
                              gu: Metric | None = None) -> Tensor3:
    """Gamma^{ij}_k = -g^{is} Gamma^j_{sk} (third kind).

    Pass a precomputed contravariant companion as gu to skip the inversion.
    """
    if gu is not None and g.variance == "covariant":
        gl = g
    else:
        gl, gu = _covariant(g)
    if chr2 is None:
        chr2 = christoffel(space, gl, gu=gu)
    n = g.n
    rng = range(1, n + 1)
    ent = [[[-sum(gu[i, s] * chr2[j, s, k] for s in rng)
             for k in rng] for j in rng] for i in rng]
    return Tensor3(n, ent)


def riemann_curvature(space: JetSpace, g: Metric,
                      chr2: Tensor3 | None = None,
                      gu: Metric | None = None) -> Tensor4:
    """R^{ij}_{kl} = g^{is} R^j_{skl} with the convention in the header.

    ``gu`` optionally supplies the contravariant metric (skipping the
    inversion)."""
    if gu is None:
        _, gu = _covariant(g)
    if chr2 is None:
        chr2 = christoffel(space, g)
    n = g.n
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]

    def d(e, j):
        return sp.diff(e, fields[j - 1])

    rng = range(1, n + 1)
    # R^i_{jkl}, antisymmetric in (k, l): compute k < l, mirror the rest
    zero = sp.Integer(0)
    rlow = [[[[zero] * n for _ in range(n)] for _ in range(n)]
            for _ in range(n)]
    for i in rng:
        for j in rng:
            for k in rng:
                for l in range(k + 1, n + 1):
                    e = canonical(
                        d(chr2[i, k, j], l) - d(chr2[i, l, j], k)
                        + sum(chr2[i, l, s] * chr2[s, k, j]
                              - chr2[i, k, s] * chr2[s, l, j] for s in rng))
                    rlow[i - 1][j - 1][k - 1][l - 1] = e
                    rlow[i - 1][j - 1][l - 1][k - 1] = -e
    # R^{ij}_{kl} = g^{is} R^j_{skl}, antisymmetric in (i, j) as well
    ent = [[[[zero] * n for _ in range(n)] for _ in range(n)]
           for _ in range(n)]
    for i in rng:
        for j in range(i + 1, n + 1):
            for k in rng:
                for l in range(k + 1, n + 1):
                    e = canonical(sum(
                        gu[i, s] * rlow[j - 1][s - 1][k - 1][l - 1]
                        for s in rng))
                    for (a, b, sgn1) in ((i, j, 1), (j, i, -1)):
                        ent[a - 1][b - 1][k - 1][l - 1] = sgn1 * e
                        ent[a - 1][b - 1][l - 1][k - 1] = -sgn1 * e
    return Tensor4(n, ent, canonicalize=False)


def covariant_derivative_11(space: JetSpace, g: Metric, V: SquareArray,
                            chr2: Tensor3 | None = None) -> Tensor3:
    """(nabla_k V)^i_j indexed as T[k, i, j]."""
    if chr2 is None:
        chr2 = christoffel(space, g)
    n = g.n
    fields = [space.jet(j, 0).sym for j in range(1, n + 1)]
    rng = range(1, n + 1)
    ent = [[[sp.diff(V[i, j], fields[k - 1])
             + sum(chr2[i, k, s] * V[s, j] - chr2[s, k, j] * V[i, s]
                   for s in rng)
             for j in rng] for i in rng] for k in rng]
    return Tensor3(n, ent)
