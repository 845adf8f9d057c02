import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.degiorgi import (constant_spread, dirichlet_section_bound, energy_chain_check, iteration_vanishing_level,
                          level_profile, q_star, recursion_constant, rollout_recursion, symmetric_power,
                          vanishing_level, weak_max_check, weak_max_family, weighted_field, weighted_flux)
from src.elliptic_solver import direct_problem, solve
from src.errors import BetaNotAboveOne, DegenerateDenominator, MaxPrincipleViolated, NotSPD
from src.models import IterationParams, VectorField2D
from src.sample_fields import constant_source, critical_flux, random_family, singular_source


@settings(max_examples=100, deadline=None)
@given(C=st.floats(0.1, 10.0), alpha=st.floats(0.5, 2.0), beta=st.floats(1.5, 3.0),
       omega0=st.floats(1e-3, 4.0), k0=st.floats(-1.0, 1.0), steps=st.integers(1, 30))
def test_recursion_profiles_stay_below_vanishing_level(C, alpha, beta, omega0, k0, steps):
    params = IterationParams(C, alpha, beta)
    d = iteration_vanishing_level(params, omega0, k0)
    profile = rollout_recursion(params, omega0, k0, steps)
    assert np.all(profile.ks <= k0 + d)
    assert np.all(np.diff(profile.omegas) < 0)
    # consecutive ladder levels meet the recursion with equality
    gaps = d * 2.0 ** -np.arange(1, steps + 1)
    predicted = C * gaps ** -alpha * profile.omegas[:-1] ** beta
    assert np.allclose(profile.omegas[1:], predicted, rtol=1e-8)


def test_recursion_constant_recovers_C():
    params = IterationParams(2.0, 1.0, 2.0)
    profile = rollout_recursion(params, 1.0, 0.0, 1)
    assert recursion_constant(profile, 1.0, 2.0) == pytest.approx(2.0)


def test_vanishing_level_is_zero_for_empty_set():
    assert iteration_vanishing_level(IterationParams(1.0, 1.0, 2.0), 0.0) == 0.0


def test_beta_must_exceed_one():
    with pytest.raises(BetaNotAboveOne):
        iteration_vanishing_level(IterationParams(1.0, 1.0, 1.0), 0.5)
    with pytest.raises(ValueError):
        IterationParams(0.0, 1.0, 2.0)


def test_level_profile_of_linear_function(grid33):
    u = grid33.with_values(grid33.coords()[0])
    profile = level_profile(u, [0.5, -0.5, 2.0])
    assert list(profile.ks) == [-0.5, 0.5, 2.0]
    assert np.all(np.diff(profile.omegas) <= 0)
    assert profile.omegas[-1] == 0.0
    assert vanishing_level(profile) == 2.0
    assert vanishing_level(level_profile(u, [0.0])) == np.inf


def test_q_star():
    assert q_star(4.0) == pytest.approx(4.0 / 3.0)
    assert q_star(64.0) < 2.0


def test_symmetric_square_root(perturbed65):
    p = perturbed65
    mask = p.interior
    s11, s12, s22 = symmetric_power(p.hxx, p.hxy, p.hyy, 0.5, mask)
    assert np.allclose((s11 * s11 + s12 * s12)[mask], p.hxx[mask])
    assert np.allclose((s11 * s12 + s12 * s22)[mask], p.hxy[mask])
    assert np.allclose((s12 * s12 + s22 * s22)[mask], p.hyy[mask])


def test_symmetric_power_rejects_indefinite():
    ones = np.ones((3, 3))
    with pytest.raises(NotSPD):
        symmetric_power(ones, 0 * ones, -ones)


def test_weighted_flux_inverts_weighted_field(skew65):
    F = VectorField2D.constant(skew65.phi.shape, 1.0, -2.0)
    back = weighted_flux(skew65, weighted_field(skew65, F))
    mask = skew65.interior
    assert np.allclose(back.c1[mask], 1.0)
    assert np.allclose(back.c2[mask], -2.0)


def test_weak_max_with_zero_data(isotropic65):
    x1, _ = isotropic65.phi.coords()
    problem = direct_problem(isotropic65, dirichlet=x1)
    result = solve(problem)
    report = weak_max_check(isotropic65, problem, result, 4.0)
    assert report.degenerate
    assert report.constant_needed == 0.0
    assert report.sup_u <= report.boundary_sup_plus + 1e-8
    with pytest.raises(DegenerateDenominator):
        weak_max_check(isotropic65, problem, result, 4.0, require_constant=True)


def test_weak_max_detects_violation(isotropic65):
    problem = direct_problem(isotropic65)
    result = solve(problem)
    values = result.u.values.copy()
    values[32, 32] = 1.0
    broken = dataclasses.replace(result, u=result.u.with_values(values, result.u.mask))
    with pytest.raises(MaxPrincipleViolated):
        weak_max_check(isotropic65, problem, broken, 4.0)


@pytest.mark.parametrize("q", [4.0, 8.0, 64.0])
def test_weak_max_constant_with_data(skew65, q):
    F = critical_flux(skew65.phi, (0.0, 0.0), q)
    f = singular_source(skew65.phi, (0.0, 0.0), 0.5)
    problem = direct_problem(skew65, F, f)
    result = solve(problem)
    report = weak_max_check(skew65, problem, result, q)
    assert not report.degenerate
    assert np.isfinite(report.constant_needed) and report.constant_needed >= 0.0
    assert report.sup_u <= report.bound_rhs + 1e-12
    assert report.q_star == pytest.approx(q_star(q))


def test_weak_max_needs_q_above_dimension(isotropic65):
    problem = direct_problem(isotropic65)
    with pytest.raises(ValueError):
        weak_max_check(isotropic65, problem, solve(problem), 2.0)


def test_weak_max_family_constants_stay_within_a_decade():
    family = random_family(0, 10, 65, 0.5, 2.0)
    table = weak_max_family(family, 4.0, threads=2)
    assert list(table["member"]) == list(range(10))
    assert not table["degenerate"].any()
    constants = table["constant_needed"].to_numpy()
    assert np.all(np.isfinite(constants)) and np.all(constants > 0.0)
    assert np.all(table["sup_u"] > 0.0)
    # same domain for every member, so the source norm is shared
    assert np.allclose(table["f_norm"], table["f_norm"].iloc[0])
    assert constant_spread(table) <= 10.0


def test_weak_max_family_with_zero_data_has_no_spread():
    family = random_family(1, 3, 33, 0.5, 2.0)
    table = weak_max_family(family, 4.0, data=lambda p: (None, constant_source(p.phi, 0.0)))
    assert table["degenerate"].all()
    assert np.all(table["constant_needed"] == 0.0)
    assert np.isnan(constant_spread(table))


@pytest.mark.parametrize("q", [4.0, 8.0, 64.0])
def test_section_bound_exponent(isotropic65, q):
    report = dirichlet_section_bound(isotropic65, (0.0, 0.0), [0.02, 0.04, 0.08, 0.16], q)
    assert report.expected_exponent == pytest.approx(0.5 - 1.0 / q)
    assert abs(report.fitted_exponent - report.expected_exponent) <= 0.1
    assert all(s > 0 for s in report.sup_abs)


def test_section_bound_without_data(isotropic65):
    zero = VectorField2D.zeros(isotropic65.phi.shape)
    report = dirichlet_section_bound(isotropic65, (0.0, 0.0), [0.04, 0.08], 8.0, F=zero)
    assert np.isnan(report.fitted_exponent)
    assert report.prefactor == 0.0


def test_energy_chain_without_source(isotropic65):
    F = critical_flux(isotropic65.phi, (0.0, 0.0), 8.0)
    problem = direct_problem(isotropic65, F)
    result = solve(problem)
    report = energy_chain_check(isotropic65, problem, result, 8.0, sobolev_constant=0.3)
    assert len(report.levels) == 8
    assert report.holds
    assert all(e >= 0.0 for e in report.energies)
    assert report.energies[0] >= report.energies[-1]
