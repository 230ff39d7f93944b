import random
from fractions import Fraction

import pytest
import sympy as sp

from hamforge.linsolve import (CollectError, InconsistentSystemError, LinRow,
                               LinSystem, collect_coefficients,
                               residual_witness, same_solution_space, solve,
                               solve_batched)


def _symbols(m):
    return [sp.Symbol(f"x{i}") for i in range(1, m + 1)]


def random_system(rng: random.Random, max_unknowns=6, max_rows=8):
    """Random exact system, sometimes consistent by construction."""
    m = rng.randint(1, max_unknowns)
    xs = _symbols(m)
    target = [Fraction(rng.randint(-5, 5), rng.randint(1, 4))
              for _ in range(m)]
    rows = []
    consistent = rng.random() < 0.8
    for _ in range(rng.randint(1, max_rows)):
        coeffs = {i: Fraction(rng.randint(-4, 4))
                  for i in rng.sample(range(m), rng.randint(1, m))}
        coeffs = {i: c for i, c in coeffs.items() if c != 0}
        if not coeffs:
            continue
        const = -sum(c * target[i] for i, c in coeffs.items())
        if not consistent and rng.random() < 0.3:
            const += Fraction(rng.randint(1, 3))
        rows.append(LinRow.make(coeffs, const))
    return LinSystem(xs, rows), target, consistent


def _sympy_solution_dim(system: LinSystem):
    m = len(system.unknowns)
    A = sp.zeros(len(system.rows), m)
    b = sp.zeros(len(system.rows), 1)
    for r, row in enumerate(system.rows):
        for i, c in row.coeffs:
            A[r, i] = sp.Rational(c)
        b[r] = -sp.Rational(row.const)
    aug = A.row_join(b)
    if A.rank() != aug.rank():
        return None
    return m - A.rank()


def test_collect_coefficients_known():
    x, y = sp.symbols("x y")
    u = sp.Symbol("u1")
    # (x + 2y - 3) u1 + (x - 1) = coefficient rows per monomial of u1
    ident = (x + 2 * y) * u + x - 3 * u - 1
    sysm = collect_coefficients([ident], [x, y])
    # monomials 1, u1 each give one row in unknowns (x, y)
    assert len(sysm.rows) == 2
    sol = solve(sysm)
    assert sol.dimension == 0
    vals = dict(zip(sysm.unknowns, sol.particular))
    assert vals[x] == 1
    # x + 2y - 3 = 0 with x = 1 gives y = 1
    assert vals[y] == 1


def test_collect_rejects_nonlinear():
    x, y = sp.symbols("x y")
    u = sp.Symbol("u1")
    with pytest.raises(CollectError):
        collect_coefficients([x * y * u], [x, y])
    with pytest.raises(CollectError):
        collect_coefficients([x ** 2 + u], [x])
    with pytest.raises(CollectError):
        collect_coefficients([u / x + 1], [x])


def test_solve_unique():
    x1, x2 = _symbols(2)
    rows = [LinRow.make({0: Fraction(1), 1: Fraction(1)}, Fraction(-3)),
            LinRow.make({0: Fraction(1), 1: Fraction(-1)}, Fraction(-1))]
    sol = solve(LinSystem([x1, x2], rows))
    assert sol.dimension == 0
    assert sol.particular == [Fraction(2), Fraction(1)]


def test_solve_underdetermined():
    x1, x2, x3 = _symbols(3)
    rows = [LinRow.make({0: Fraction(1), 1: Fraction(1), 2: Fraction(1)})]
    sol = solve(LinSystem([x1, x2, x3], rows))
    assert sol.dimension == 2
    assert residual_witness(LinSystem([x1, x2, x3], rows), sol) is None


def test_inconsistent_raises_with_witness():
    x1 = _symbols(1)
    rows = [LinRow.make({0: Fraction(1)}, Fraction(-1)),
            LinRow.make({0: Fraction(1)}, Fraction(-2))]
    with pytest.raises(InconsistentSystemError) as err:
        solve(LinSystem(x1, rows))
    assert err.value.witness is not None


def test_solve_against_reference_rref():
    rng = random.Random(20260824)
    checked = 0
    for _ in range(100):
        system, target, _ = random_system(rng)
        ref_dim = _sympy_solution_dim(system)
        if ref_dim is None:
            with pytest.raises(InconsistentSystemError):
                solve(system)
        else:
            sol = solve(system)
            assert sol.dimension == ref_dim
            assert residual_witness(system, sol) is None
        checked += 1
    assert checked == 100


def test_solve_batched_equals_solve():
    rng = random.Random(99)
    for _ in range(100):
        system, _, _ = random_system(rng)
        try:
            direct = solve(system)
        except InconsistentSystemError:
            with pytest.raises(InconsistentSystemError):
                solve_batched(system, batch_size=rng.randint(1, 4))
            continue
        batched = solve_batched(system, batch_size=rng.randint(1, 4))
        assert same_solution_space(direct, batched)


def test_solve_batched_large(tmp_path):
    # a 5000-row sparse system with a unique solution
    rng = random.Random(7)
    m = 40
    xs = _symbols(m)
    target = [Fraction(rng.randint(-9, 9)) for _ in range(m)]
    rows = []
    for i in range(m):
        rows.append(LinRow.make({i: Fraction(1)}, -target[i]))
    while len(rows) < 5000:
        idx = rng.sample(range(m), 3)
        coeffs = {i: Fraction(rng.randint(-3, 3)) for i in idx}
        coeffs = {i: c for i, c in coeffs.items() if c != 0}
        if not coeffs:
            continue
        rows.append(LinRow.make(
            coeffs, -sum(c * target[i] for i, c in coeffs.items())))
    system = LinSystem(xs, rows)
    ck = tmp_path / "checkpoint.txt"
    sol = solve_batched(system, batch_size=500, checkpoint_path=str(ck))
    assert sol.dimension == 0
    assert sol.particular == target
    assert same_solution_space(sol, solve(system))
    text = ck.read_text()
    assert text.startswith("hamforge-session v1\n")
    assert "[artifact checkpoint]" in text
    assert "kind checkpoint" in text
    assert "batch-index = 9" in text
    assert "resolved x1 =" in text


def test_checkpoint_written_per_batch(tmp_path):
    x1, x2 = _symbols(2)
    rows = [LinRow.make({0: Fraction(1), 1: Fraction(2)}, Fraction(-4)),
            LinRow.make({1: Fraction(1)}, Fraction(-1))]
    ck = tmp_path / "ck.txt"
    solve_batched(LinSystem([x1, x2], rows), batch_size=1,
                  checkpoint_path=str(ck))
    text = ck.read_text()
    assert "batch-index = 1" in text


def test_batched_inconsistency_reports_batch():
    x1 = _symbols(1)
    rows = [LinRow.make({0: Fraction(1)}, Fraction(-1)),
            LinRow.make({0: Fraction(1)}, Fraction(-2))]
    with pytest.raises(InconsistentSystemError) as err:
        solve_batched(LinSystem(x1, rows), batch_size=1)
    assert err.value.batch_index == 1


def test_same_solution_space_distinguishes():
    x1, x2 = _symbols(2)
    a = solve(LinSystem([x1, x2], [LinRow.make({0: Fraction(1)})]))
    b = solve(LinSystem([x1, x2], [LinRow.make({1: Fraction(1)})]))
    assert not same_solution_space(a, b)
    assert same_solution_space(a, a)
