import numpy as np
import pandas as pd
import pytest

from src.convex_core import cofactor
from src.errors import ZeroEnergy
from src.inequalities import (classical_sobolev_maximum, estimate_eps0, estimate_moser_constant, full_support_sine,
                              moser_exponent, moser_family, moser_threshold, moser_trudinger_check, phi_energy,
                              sobolev_check, sobolev_family, trial_table)
from src.models import CofactorField, DerivativeScheme
from src.sample_fields import family_potential, moser_bump, sample_on, smooth_bump


@pytest.fixture(scope="module")
def pinched100():
    return family_potential("pinched", 65, kappa=100.0, width=0.3)


def test_sobolev_ratios_are_finite(skew65):
    table = sobolev_family(skew65.phi, cofactor(skew65), trials=12, seed=4)
    assert list(table.columns) == ["trial", "ratio", "energy", "lq_norm"]
    assert len(table) == 12
    assert np.all(np.isfinite(table["ratio"])) and np.all(table["ratio"] > 0)


def test_sobolev_family_is_seeded(perturbed65):
    c = cofactor(perturbed65)
    first = sobolev_family(perturbed65.phi, c, trials=6, seed=9)
    second = sobolev_family(perturbed65.phi, c, trials=6, seed=9)
    pd.testing.assert_frame_equal(first, second)


def test_identity_family_reaches_classical_maximum(grid33):
    classical, extremal = classical_sobolev_maximum(grid33)
    assert extremal.values[0, 0] == 0.0
    table = sobolev_family(grid33, CofactorField.identity(grid33), trials=20, seed=0,
                           extra=[full_support_sine(grid33)])
    best = table["ratio"].max()
    assert 0.9 * classical <= best <= 1.1 * classical


def test_sobolev_check_rejects_bad_input(grid33):
    c = CofactorField.identity(grid33)
    with pytest.raises(ZeroEnergy):
        sobolev_check(grid33, c)
    u = sample_on(grid33, smooth_bump((0.0, 0.0), 0.5))
    with pytest.raises(ValueError):
        sobolev_check(u, c, two_star=2.0)


def test_phi_energy_schemes_agree(isotropic65):
    u = sample_on(isotropic65.phi, smooth_bump((0.1, 0.0), 0.6))
    c = cofactor(isotropic65)
    central = phi_energy(u, c, DerivativeScheme.CENTRAL)
    spectral = phi_energy(u, c, DerivativeScheme.SPECTRAL)
    assert central == pytest.approx(spectral, rel=1e-2)


def test_moser_exponent_is_scale_invariant(skew65):
    c = cofactor(skew65)
    u = sample_on(skew65.phi, smooth_bump((0.0, 0.1), 0.5))
    base = moser_exponent(u, c)
    scaled = moser_exponent(u.with_values(3.0 * u.values), c)
    assert np.allclose(scaled, base, rtol=1e-12, atol=0.0)


def test_moser_threshold():
    assert moser_threshold(np.inf, 0.5) == pytest.approx(2.0 * np.pi)
    assert moser_threshold(0.0, 2.0) == pytest.approx(2.0 * np.pi)
    assert moser_threshold(4.0, 1.0) == pytest.approx(4.0 * np.pi * 5.0 / 6.0)


@pytest.mark.parametrize("r", [0.2, 0.1, 0.05])
def test_moser_integrals_stay_bounded(isotropic65, r):
    c = cofactor(isotropic65)
    eps0 = estimate_eps0(isotropic65)
    beta = moser_threshold(eps0, isotropic65.lambda_lo)
    u = sample_on(isotropic65.phi, moser_bump((0.0, 0.0), 0.5, r))
    report = moser_trudinger_check(u, isotropic65, c, beta, eps0)
    assert not report.saturated
    assert report.lhs < 10.0 * isotropic65.phi.measure()
    assert report.ratio == pytest.approx(1.0)
    assert report.rhs_bound == pytest.approx(report.lhs)
    assert report.params["threshold"] == pytest.approx(beta)


def test_moser_table(isotropic65):
    c = cofactor(isotropic65)
    functions = [sample_on(isotropic65.phi, moser_bump((0.0, 0.0), 0.5, r)) for r in (0.2, 0.1)]
    table = trial_table(functions, lambda u: moser_trudinger_check(u, isotropic65, c, 2.0, eps0=1.0))
    assert list(table["trial"]) == [0, 1]
    assert not table["saturated"].any()


def test_eps0_of_quadratic_is_top_of_ladder(isotropic65):
    assert estimate_eps0(isotropic65) == 4.0


def test_eps0_of_mild_pinch():
    assert estimate_eps0(family_potential("pinched", 65, kappa=2.0, width=0.3)) == 4.0


def test_eps0_of_strong_pinch(pinched100):
    assert estimate_eps0(pinched100) == 2.0
    assert estimate_eps0(pinched100, eps_ladder=[3.0, 4.0]) == 0.0


def test_eps0_ladder_range(isotropic65):
    with pytest.raises(ValueError):
        estimate_eps0(isotropic65, eps_ladder=[0.5, 5.0])


def test_moser_family_holds_with_measured_constant(isotropic65):
    c = cofactor(isotropic65)
    eps0 = estimate_eps0(isotropic65)
    beta = moser_threshold(eps0, isotropic65.lambda_lo)
    h = max(isotropic65.phi.spacing)
    functions = [sample_on(isotropic65.phi, moser_bump((0.0, 0.0), 0.8, 3.0 * h * 2.0 ** k)) for k in range(4)]
    table, C = moser_family(functions, isotropic65, c, beta, eps0)
    assert C == pytest.approx(estimate_moser_constant(functions, isotropic65, c, beta, eps0))
    assert np.isfinite(C) and C > 0
    assert (table["ratio"] <= 1.0 + 1e-12).all()
    assert table["ratio"].max() == pytest.approx(1.0)
    assert not table["saturated"].any()
    measure = isotropic65.phi.measure()
    assert C * measure ** (eps0 / (2.0 + eps0)) < 10.0 * measure


def test_measured_constant_bounds_a_fixed_constant_check(skew65):
    c = cofactor(skew65)
    functions = [sample_on(skew65.phi, smooth_bump((0.0, 0.0), r)) for r in (0.3, 0.5, 0.7)]
    C = estimate_moser_constant(functions, skew65, c, 1.0, 2.0)
    for u in functions:
        assert moser_trudinger_check(u, skew65, c, 1.0, 2.0, C).ratio <= 1.0 + 1e-12
    with pytest.raises(ValueError):
        estimate_moser_constant([], skew65, c, 1.0, 2.0)


@pytest.mark.slow
@pytest.mark.parametrize("family,params", [
    ("isotropic", {}),
    ("diagonal", {"a": 2.0, "b": 0.5}),
    ("skew", {"eps": 0.5}),
    ("perturbed", {"amplitude": 0.05}),
    ("pinched", {"kappa": 16.0, "width": 0.3}),
])
def test_sobolev_constant_over_a_thousand_trials(family, params):
    p = family_potential(family, 65, **params)
    table = sobolev_family(p.phi, cofactor(p), trials=1000, seed=0)
    assert len(table) == 1000
    assert np.all(np.isfinite(table["ratio"])) and np.all(table["ratio"] > 0)
