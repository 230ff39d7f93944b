import pytest
import sympy as sp

from hamforge.density import (MultiDensity, dx_density, dx_density_n,
                              normalize_density)
from hamforge.expr import Workspace
from hamforge.jet import JetSpace
from hamforge.schouten import CovectorSet, NonlocalRegistry, SchoutenContext

from props import check_imdx_annihilation, check_normalize_exactness, \
    check_normalize_idempotent


@pytest.fixture
def ctx():
    ws = Workspace()
    space = JetSpace(ws, 2, max_order=10)
    cov = CovectorSet(space, args=(1, 2))
    reg = NonlocalRegistry(space, cov)
    return SchoutenContext(space, cov, reg)


def test_multidensity_algebra(ctx):
    cov = ctx.covectors
    p = cov.cov(1, 1)
    q = cov.cov(2, 1)
    d = MultiDensity((1, 2))
    d.add_term((p, q), sp.Integer(2))
    d.add_term((p, q), sp.Integer(3))
    assert d.terms[(p, q)] == 5
    e = d + d.scale(-1)
    assert not e.pruned().terms
    assert (d - d).pruned().terms == {}


def test_multidensity_multiply_disjoint_slots(ctx):
    cov = ctx.covectors
    a = MultiDensity((1,), {(cov.cov(1, 1),): sp.Integer(2)})
    b = MultiDensity((2,), {(cov.cov(2, 2),): sp.Integer(3)})
    c = a.multiply(b)
    assert c.slots == (1, 2)
    assert c.terms[(cov.cov(1, 1), cov.cov(2, 2))] == 6


def test_dx_density_leibniz_on_key(ctx):
    space = ctx.space
    cov = ctx.covectors
    u1 = space.jet(1, 0).sym
    p = cov.cov(1, 1)
    d = MultiDensity((1,), {(p,): u1})
    out = dx_density(d, ctx)
    u1x = space.jet(1, 1).sym
    assert out.terms[(p,)] == u1x
    assert out.terms[(cov.cov(1, 1, 1),)] == u1


def test_scalar_normal_form_integration_by_parts(ctx):
    # u1_x u1_xx = Dx(u1_x^2 / 2) has zero normal form
    space = ctx.space
    u1x = space.jet(1, 1).sym
    u1xx = space.jet(1, 2).sym
    d = MultiDensity.scalar(u1x * u1xx)
    nf, cof = normalize_density(d, ctx)
    assert not nf.pruned().terms
    assert sp.cancel(cof.to_expr() - u1x ** 2 / 2) == 0


def test_scalar_normal_form_nontrivial_survives(ctx):
    # u1_x^2 is not a total derivative; the normal form keeps it
    space = ctx.space
    u1x = space.jet(1, 1).sym
    nf, _ = normalize_density(MultiDensity.scalar(u1x ** 2), ctx)
    assert nf.pruned().terms


def test_normalize_strips_covector_derivatives(ctx):
    # coeff * psi_x reduces to -Dx(coeff) * psi plus a cofactor
    space = ctx.space
    cov = ctx.covectors
    u1 = space.jet(1, 0).sym
    d = MultiDensity((1,), {(cov.cov(1, 1, 1),): u1 ** 2})
    nf, cof = normalize_density(d, ctx)
    p = cov.cov(1, 1)
    assert set(nf.terms) == {(p,)}
    assert sp.expand(nf.terms[(p,)] + 2 * u1 * space.jet(1, 1).sym) == 0
    # exactness: d = nf + Dx(cof)
    diff = (nf + dx_density(cof, ctx) - d).pruned()
    assert all(sp.expand(c) == 0 for c in diff.terms.values())


def test_dx_density_n(ctx):
    cov = ctx.covectors
    p = cov.cov(1, 1)
    d = MultiDensity((1,), {(p,): sp.Integer(1)})
    out = dx_density_n(d, ctx, 3)
    assert out.terms == {(cov.cov(1, 1, 3),): sp.Integer(1)}


def test_normalize_idempotent_property():
    assert check_normalize_idempotent(100) == []


def test_imdx_annihilation_property():
    assert check_imdx_annihilation(100) == []


def test_normalize_exactness_property():
    assert check_normalize_exactness(100) == []
