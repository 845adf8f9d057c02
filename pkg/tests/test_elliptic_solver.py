import numpy as np
import pytest

from src import grid_ops
from src.elliptic_solver import (assemble, direct_problem, direct_vs_transformed, discrete_energy,
                                 manufactured_problem, minimality_check, pcg, solve, solver_stats)
from src.errors import NoConvergence, SingularSystem
from src.models import EllipticProblem, GridFunction2D, ManufacturedKind
from src.sample_fields import constant_source, family_potential
from src.stages.inputs import manufactured_solution

QUADRATICS = [("isotropic", {}), ("diagonal", {"a": 2.0, "b": 0.5}), ("skew", {"eps": 0.5})]


def _exact(p, kind):
    fn = manufactured_solution(kind, 1.0)
    return GridFunction2D.from_function(fn, p.phi.shape, p.phi.origin, p.phi.spacing, p.phi.mask)


def _sine_error(n, family="isotropic", **params):
    p = family_potential(family, n, **params)
    u_exact = _exact(p, ManufacturedKind.SINE)
    problem = manufactured_problem(u_exact, p)
    result = solve(problem)
    return float(np.max(np.abs(result.u.values - u_exact.values)[problem.mask]))


@pytest.mark.parametrize("family,params", QUADRATICS)
def test_linear_data_is_reproduced(family, params):
    p = family_potential(family, 33, **params)
    x1, x2 = p.phi.coords()
    linear = 0.3 + x1 - 2.0 * x2
    result = solve(direct_problem(p, dirichlet=linear))
    assert result.residual <= 1e-10
    assert np.max(np.abs(result.u.values - linear)[result.u.mask]) < 1e-8


@pytest.mark.parametrize("family,params", QUADRATICS)
def test_cubic_is_solved_exactly(family, params):
    p = family_potential(family, 33, **params)
    u_exact = _exact(p, ManufacturedKind.CUBIC)
    result = solve(manufactured_problem(u_exact, p))
    assert np.max(np.abs(result.u.values - u_exact.values)[result.u.mask]) < 1e-6


def test_sine_error_is_second_order():
    coarse, fine = _sine_error(33), _sine_error(65)
    assert fine < 1e-2
    assert np.log2(coarse / fine) >= 1.5


def test_skew_sine_error_is_small():
    assert _sine_error(65, "skew", eps=0.5) < 1e-2


def test_solve_is_deterministic(skew65):
    u_exact = _exact(skew65, ManufacturedKind.SINE)
    problem = manufactured_problem(u_exact, skew65)
    first, second = solve(problem), solve(problem)
    assert first.iterations == second.iterations
    assert np.array_equal(first.u.values, second.u.values)
    stats = solver_stats(first)
    assert stats["unknowns"] == int(problem.mask.sum())


def test_positive_source_gives_subsolution(isotropic65):
    f = constant_source(isotropic65.phi, 1.0)
    result = solve(direct_problem(isotropic65, f=f))
    assert np.max(result.u.values[result.u.mask]) <= 1e-12
    assert np.min(result.u.values[result.u.mask]) < 0.0


def test_solution_minimises_discrete_energy(skew65):
    f = constant_source(skew65.phi, -2.0)
    problem = direct_problem(skew65, f=f)
    result = solve(problem)
    check = minimality_check(problem, result, trials=20, seed=1)
    assert check["holds"]
    assert check["min_gain"] >= 0.0
    assert check["energy"] == pytest.approx(discrete_energy(problem, result.u.values))


def test_energy_rises_off_the_solution(isotropic65):
    problem = direct_problem(isotropic65, f=constant_source(isotropic65.phi, 1.0))
    result = solve(problem)
    bumped = result.u.values.copy()
    bumped[32, 32] += 0.01
    assert discrete_energy(problem, bumped) > discrete_energy(problem, result.u.values)


def test_assembled_matrix_is_symmetric(skew65):
    system = assemble(direct_problem(skew65))
    difference = system.matrix - system.matrix.T
    assert abs(difference).max() < 1e-12
    assert np.all(system.matrix.diagonal() > 0)


def test_rejects_indefinite_coefficient():
    shape = (9, 9)
    mask = np.zeros(shape, dtype=bool)
    mask[2:7, 2:7] = True
    ones = np.ones(shape)
    problem = EllipticProblem(a11=-ones, a12=0 * ones, a22=ones, G1=0 * ones, G2=0 * ones, g=0 * ones,
                              dirichlet=0 * ones, mask=mask, origin=(0.0, 0.0), spacing=(0.1, 0.1))
    with pytest.raises(SingularSystem):
        assemble(problem)


def test_rejects_mask_on_array_edge(isotropic65):
    problem = direct_problem(isotropic65, unknowns=isotropic65.phi.mask)
    with pytest.raises(ValueError):
        assemble(problem)


def test_iteration_cap(isotropic65):
    problem = direct_problem(isotropic65, f=constant_source(isotropic65.phi, 1.0))
    with pytest.raises(NoConvergence) as info:
        solve(problem, max_iter=2)
    assert info.value.iterations == 2
    assert info.value.details["residual"] > 1e-10


def test_pcg_zero_rhs(isotropic65):
    system = assemble(direct_problem(isotropic65))
    x, iterations, residual = pcg(system.matrix, np.zeros(system.rhs.size))
    assert iterations == 0 and residual == 0.0
    assert not x.any()


def test_manufactured_problem_uses_exact_boundary(diagonal65):
    u_exact = _exact(diagonal65, ManufacturedKind.SINE)
    problem = manufactured_problem(u_exact, diagonal65)
    ring = grid_ops.ring(problem.mask)
    assert np.allclose(problem.dirichlet[ring], u_exact.values[ring])


@pytest.mark.parametrize("family,params", QUADRATICS)
def test_paths_agree_on_quadratics(family, params):
    p = family_potential(family, 65, **params)
    report = direct_vs_transformed(p, None, None, 0.6, u_exact=_exact(p, ManufacturedKind.CUBIC))
    assert report.region_nodes > 0
    assert report.max_discrepancy <= 5e-3
    assert report.max_error_direct < 1e-6


def test_paths_agree_trivially_without_data(skew65):
    report = direct_vs_transformed(skew65, None, None, 0.6)
    assert report.max_discrepancy == pytest.approx(0.0, abs=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize("family,params", QUADRATICS)
def test_path_equivalence_refinement(family, params):
    discrepancies = []
    for n in (65, 129):
        p = family_potential(family, n, **params)
        report = direct_vs_transformed(p, None, None, 0.6, u_exact=_exact(p, ManufacturedKind.CUBIC))
        discrepancies.append(report.max_discrepancy)
    assert discrepancies[1] <= 1e-3
    if discrepancies[1] > 1e-12:
        assert np.log2(discrepancies[0] / discrepancies[1]) >= 1.5


def test_transposed_problem_solves_identically(skew65):
    problem = direct_problem(skew65, f=constant_source(skew65.phi, -1.0))
    flipped = problem.transposed()
    assert flipped.a12 is not problem.a12
    difference = assemble(problem).matrix - assemble(flipped).matrix
    assert abs(difference).max() == 0.0
    np.testing.assert_array_equal(solve(problem).u.values, solve(flipped).u.values)
