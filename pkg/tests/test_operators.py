import pytest
import sympy as sp

from hamforge.expr import ExprError, Workspace, canonical
from hamforge.geometry import Metric, SquareArray, invert_metric, \
    velocity_matrix
from hamforge.jet import JetSpace
from hamforge.operators import (WnlOperator, make_ferapontov,
                                make_third_order, third_order_c_tensors)


@pytest.fixture
def space():
    return JetSpace(Workspace(), 3, max_order=8)


@pytest.fixture
def space2():
    return JetSpace(Workspace(), 2, max_order=8)


def _eq8_h(space):
    # Monge metric of the canonical third-order operator for the system
    # with fluxes (u2, u3, u2^2 - u1 u3)
    u1, u2, u3 = (space.jet(i, 0).sym for i in (1, 2, 3))
    from hamforge.conditions import find_third_order
    res = find_third_order(space, [u2, u3, u2 ** 2 - u1 * u3], ())
    return res.h


def test_wnl_operator_shape_validation(space2):
    with pytest.raises(ExprError):
        WnlOperator(space2, "A", [[{}]])
    with pytest.raises(ExprError):
        WnlOperator(space2, "A", [[{}, {}], [{}, {}]],
                    tails=[[sp.Integer(1), sp.Integer(0)]], coupling=[])


def test_wnl_operator_coupling_symmetry(space2):
    with pytest.raises(ExprError):
        WnlOperator(space2, "A", [[{}, {}], [{}, {}]],
                    tails=[[sp.Integer(1), 0], [0, sp.Integer(1)]],
                    coupling=[[sp.Integer(0), sp.Integer(1)],
                              [sp.Integer(2), sp.Integer(0)]])


def test_make_ferapontov_flat_constant(space2):
    u1, u2 = (space2.jet(i, 0).sym for i in (1, 2))
    g = Metric(2, [[1, 0], [0, 1]], "contravariant")
    V = SquareArray(2, [[u1, 0], [0, u2]])
    al, be, ga = sp.Integer(2), sp.Integer(0), sp.Integer(-1)
    op = make_ferapontov(space2, g, V, al, be, ga)
    # local part is g Dx, no Christoffel contribution
    assert op.local[0][0] == {1: sp.Integer(1)}
    assert op.local[0][1] == {}
    assert op.max_local_order() == 1
    # tails are V u_x and u_x
    u1x, u2x = space2.jet(1, 1).sym, space2.jet(2, 1).sym
    assert op.tails[0] == [u1 * u1x, u2 * u2x]
    assert op.tails[1] == [u1x, u2x]
    assert op.coupling == [[al, be], [be, ga]]


def test_make_ferapontov_accepts_covariant_metric(space2):
    u1 = space2.jet(1, 0).sym
    g = Metric(2, [[u1 + 2, 0], [0, 1]], "covariant")
    V = SquareArray(2, [[u1, 0], [0, 1]])
    op = make_ferapontov(space2, g, V, 0, 0, 0)
    gu = invert_metric(g)
    assert canonical(op.local[0][0][1] - gu[1, 1]) == 0


def test_make_third_order_constant_metric(space):
    h = Metric(3, [[2, 0, 0], [0, 1, 0], [0, 0, 1]], "covariant")
    op = make_third_order(space, h)
    hu = invert_metric(h)
    assert op.local[0][0] == {3: hu[1, 1]}
    assert op.local[1][2] == {}
    assert op.tails == []
    assert op.max_local_order() == 3


def test_make_third_order_rejects_singular(space):
    u1 = space.jet(1, 0).sym
    h = Metric(3, [[u1, u1, 0], [u1, u1, 0], [0, 0, 1]], "covariant")
    with pytest.raises(ExprError):
        make_third_order(space, h)


def test_c_tensor_skew_identity(space):
    # d_k h^{ij} = c^{ij}_k + c^{ji}_k (skew-adjointness of the operator)
    h = _eq8_h(space)
    c_lo, c_hi, hu = third_order_c_tensors(space, h)
    fields = [space.jet(j, 0).sym for j in (1, 2, 3)]
    for i in range(3):
        for j in range(3):
            for k in range(3):
                r = canonical(sp.diff(hu[i + 1, j + 1], fields[k])
                              - c_hi[i][j][k] - c_hi[j][i][k])
                assert r == 0


def test_c_tensor_raising_convention(space):
    # c^{ij}_k = h^{ia} h^{jb} c_{bak}: the first lower index of c pairs
    # with the second upper slot
    h = _eq8_h(space)
    c_lo, c_hi, hu = third_order_c_tensors(space, h)
    rng = range(3)
    for i in rng:
        for j in rng:
            for k in rng:
                expect = canonical(sum(
                    hu[i + 1, a + 1] * hu[j + 1, b + 1] * c_lo[b][a][k]
                    for a in rng for b in rng))
                assert canonical(c_hi[i][j][k] - expect) == 0


def test_c_lo_cyclic_sum_vanishes(space):
    # for a Monge metric the fully cyclic sum of c_{ijk} vanishes
    h = _eq8_h(space)
    c_lo, _, _ = third_order_c_tensors(space, h)
    rng = range(3)
    for i in rng:
        for j in rng:
            for k in rng:
                assert canonical(c_lo[i][j][k] + c_lo[j][k][i]
                                 + c_lo[k][i][j]) == 0


def test_third_order_local_structure(space):
    # local orders are exactly {3: h^{ij}, 2: Dx h^{ij} + c^{ij}_k u^k_x,
    # 1: Dx(c^{ij}_k u^k_x)}, matching Dx (h Dx + c u_x) Dx
    h = _eq8_h(space)
    _, c_hi, hu = third_order_c_tensors(space, h)
    op = make_third_order(space, h)
    ux = [space.jet(k, 1).sym for k in (1, 2, 3)]
    for i in range(3):
        for j in range(3):
            entry = op.local[i][j]
            con = sum(c_hi[i][j][k] * ux[k] for k in range(3))
            assert canonical(entry.get(3, 0) - hu[i + 1, j + 1]) == 0
            assert canonical(entry.get(2, 0) - space.dx(hu[i + 1, j + 1])
                             - con) == 0
            assert canonical(entry.get(1, 0) - space.dx(con)) == 0
            assert 0 not in entry


def test_substitute_parameters(space2):
    lam = sp.Symbol("lam")
    g = Metric(2, [[lam, 0], [0, 1]], "contravariant")
    u1 = space2.jet(1, 0).sym
    V = SquareArray(2, [[u1, 0], [0, 1]])
    op = make_ferapontov(space2, g, V, lam, 0, 0)
    fixed = op.substitute({lam: sp.Integer(-1)})
    assert fixed.local[0][0][1] == -1
    assert fixed.coupling[0][0] == -1
