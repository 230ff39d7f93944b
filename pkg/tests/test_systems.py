import pytest
import sympy as sp

from hamforge.expr import ExprError, Workspace, canonical
from hamforge.jet import JetSpace
from hamforge.systems import (EtaSpec, GenerationError, HydroSystem,
                              SystemFormatError, generate_wdvv_n3,
                              load_system)


def _space3():
    return JetSpace(Workspace(), 3, max_order=8)


def test_eta_validation():
    with pytest.raises(ExprError):
        EtaSpec(2, [[1, 0], [0, 0]])          # degenerate
    with pytest.raises(ExprError):
        EtaSpec(2, [[1, 2], [3, 1]])          # not symmetric
    with pytest.raises(ExprError):
        EtaSpec(3, [[1, 0], [0, 1]])          # shape mismatch


def test_eta_inverse_exact():
    eta = EtaSpec.canonical_antidiagonal(3)
    m = eta.matrix() * eta.inverse()
    assert m == sp.eye(3)


def test_wdvv_antidiagonal_fluxes():
    # antidiagonal eta gives f_ttt = f_xxt^2 - f_xxx f_xtt, i.e. fluxes
    # (u2, u3, u2^2 - u1 u3)
    space = _space3()
    eq, system = generate_wdvv_n3(EtaSpec.canonical_antidiagonal(3), space)
    u1, u2, u3 = (space.jet(i, 0).sym for i in (1, 2, 3))
    assert canonical(system.fluxes[0] - u2) == 0
    assert canonical(system.fluxes[1] - u3) == 0
    assert canonical(system.fluxes[2] - (u2 ** 2 - u1 * u3)) == 0
    # the scalar equation matches: f_ttt - f_xxt^2 + f_xxx f_xtt = 0
    fxxx, fxxt, fxtt, fttt = sp.symbols("f_xxx f_xxt f_xtt f_ttt")
    r = sp.cancel(sp.together(eq / sp.Poly(eq, fttt).coeff_monomial(fttt)))
    assert sp.expand(r - (fttt - fxxt ** 2 + fxxx * fxtt)) == 0


def test_wdvv_eta4_flux():
    # eta = diag(1, lam, mu): the scalar equation is
    # mu f_xxt^2 - mu f_xxx f_xtt + lam f_xtt^2 - lam f_xxt f_ttt - 1 = 0
    ws = Workspace()
    space = JetSpace(ws, 3, max_order=8)
    eq, system = generate_wdvv_n3(EtaSpec.eta4(ws), space)
    lam, mu = sp.Symbol("lam"), sp.Symbol("mu")
    u1, u2, u3 = (space.jet(i, 0).sym for i in (1, 2, 3))
    assert canonical(system.fluxes[0] - u2) == 0
    assert canonical(system.fluxes[1] - u3) == 0
    expect = (mu * (u2 ** 2 - u1 * u3) + lam * u3 ** 2 - 1) / (lam * u2)
    assert canonical(system.fluxes[2] - expect) == 0
    fxxx, fxxt, fxtt, fttt = sp.symbols("f_xxx f_xxt f_xtt f_ttt")
    target = (mu * fxxt ** 2 - mu * fxxx * fxtt + lam * fxtt ** 2
              - lam * fxxt * fttt - 1)
    scale = sp.cancel(eq / target)
    assert scale.free_symbols <= {lam, mu}
    assert sp.cancel(eq - scale * target) == 0


def test_wdvv_identity_is_eta4_at_unit_signs():
    ws = Workspace()
    space = JetSpace(ws, 3, max_order=8)
    _, sys4 = generate_wdvv_n3(EtaSpec.eta4(ws), space)
    ident = EtaSpec(3, [[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    space2 = _space3()
    _, sysi = generate_wdvv_n3(ident, space2)
    lam, mu = sp.Symbol("lam"), sp.Symbol("mu")
    for f4, fi in zip(sys4.fluxes, sysi.fluxes):
        assert canonical(sp.sympify(f4).subs({lam: 1, mu: 1}) - fi) == 0


def test_wdvv_requires_three_fields():
    with pytest.raises(GenerationError):
        generate_wdvv_n3(EtaSpec.canonical_antidiagonal(4), _space3())
    with pytest.raises(GenerationError):
        generate_wdvv_n3(EtaSpec.canonical_antidiagonal(3),
                         JetSpace(Workspace(), 2, max_order=8))


def test_hydro_system_rejects_jets():
    space = _space3()
    with pytest.raises(ExprError):
        HydroSystem(space, [space.jet(1, 1).sym, 0, 0])


def test_load_system_good():
    ws = Workspace()
    text = """
# a comment
fields 3
flux 1 = u2
flux 2 = u3
flux 3 = u2^2 - u1*u3
"""
    system = load_system(text, ws)
    assert system.n == 3
    u1, u2, u3 = (system.space.jet(i, 0).sym for i in (1, 2, 3))
    assert canonical(system.fluxes[2] - (u2 ** 2 - u1 * u3)) == 0
    assert system.provenance == "user-file"


def test_load_system_declares_parameters():
    ws = Workspace()
    system = load_system("fields 2\nflux 1 = k*u2\nflux 2 = u1\n", ws)
    assert ws.lookup("k") is not None
    assert sp.Symbol("k") in sp.sympify(system.fluxes[0]).free_symbols


def test_load_system_errors():
    with pytest.raises(SystemFormatError):
        load_system("", Workspace())
    with pytest.raises(SystemFormatError):
        load_system("fields x\n", Workspace())
    with pytest.raises(SystemFormatError):
        load_system("fields 2\nflux 1 = u1\n", Workspace())
    with pytest.raises(SystemFormatError):
        load_system("fields 2\nflux 2 = u1\nflux 1 = u2\n", Workspace())
    with pytest.raises(SystemFormatError):
        load_system("fields 1\nflux 1 = u1_x\n", Workspace())
