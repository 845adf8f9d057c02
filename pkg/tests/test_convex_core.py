import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.convex_core import (build_potential, cofactor, divergence_free_residual, modulus_of_convexity, section,
                             section_gap, section_ladder, section_volume_fit, supporting_plane)
from src.errors import DetOutOfBounds, EmptySection, NonConvex, SectionNotCompact
from src.models import GridFunction2D
from src.sample_fields import family_potential, potential_bounds, sample_potential

ORIGIN = (0.0, 0.0)


@pytest.mark.parametrize("family,params", [
    ("isotropic", {}),
    ("diagonal", {"a": 2.0, "b": 0.5}),
    ("skew", {"eps": 0.5}),
])
def test_quadratic_hessian_is_exact(family, params):
    p = family_potential(family, 33, **params)
    lo, hi = potential_bounds(family, **params)
    assert lo == hi
    assert np.max(np.abs(p.det[p.interior] - lo)) < 1e-10
    assert p.report.accepted
    assert p.report.midpoint_failures == 0


def test_rejects_wrong_det_bounds():
    with pytest.raises(DetOutOfBounds) as info:
        family_potential("isotropic", 33, bounds=(2.0, 3.0))
    assert info.value.details["count"] > 0
    assert len(info.value.details["nodes"]) <= 20


def test_rejects_inverted_bounds():
    phi = sample_potential("isotropic", 33)
    with pytest.raises(ValueError):
        build_potential(phi, 2.0, 1.0)


def test_rejects_concave_potential():
    phi = GridFunction2D.square(lambda x1, x2: -0.5 * (x1 ** 2 + x2 ** 2), 33)
    with pytest.raises(NonConvex):
        build_potential(phi, 1.0, 1.0)


def test_rejects_saddle():
    phi = GridFunction2D.square(lambda x1, x2: 0.5 * (x1 ** 2 - x2 ** 2), 33)
    with pytest.raises(NonConvex):
        build_potential(phi, 0.5, 2.0)


def test_cofactor_is_divergence_free(skew65, perturbed65):
    assert divergence_free_residual(cofactor(skew65)) == pytest.approx(0.0, abs=1e-12)
    # third derivatives commute only up to truncation for the perturbed field
    assert divergence_free_residual(cofactor(perturbed65)) < 1e-2


def test_cofactor_entries(skew65):
    c = cofactor(skew65)
    inner = skew65.interior
    assert np.allclose(c.c11[inner], 1.0)
    assert np.allclose(c.c22[inner], 1.0)
    assert np.allclose(c.c12[inner], -0.5)


def test_supporting_plane_at_node(isotropic65):
    value, g1, g2 = supporting_plane(isotropic65, (0.25, -0.5))
    assert value == pytest.approx(0.5 * (0.25 ** 2 + 0.5 ** 2), abs=1e-12)
    assert g1 == pytest.approx(0.25, abs=1e-12)
    assert g2 == pytest.approx(-0.5, abs=1e-12)


def test_isotropic_sections_are_disks(isotropic65):
    h = 0.12
    s = section(isotropic65, ORIGIN, h)
    x1, x2 = isotropic65.phi.coords()
    assert np.array_equal(s.mask, x1 ** 2 + x2 ** 2 < 2.0 * h)
    assert s.volume == pytest.approx(2.0 * np.pi * h, rel=0.05)
    assert s.compact


def test_section_volume_ratio(isotropic65):
    lo, hi = section_volume_fit(isotropic65, ORIGIN, [0.03, 0.06, 0.12, 0.24])
    assert lo == pytest.approx(2.0 * np.pi, rel=0.1)
    assert hi == pytest.approx(2.0 * np.pi, rel=0.1)


def test_section_errors(isotropic65):
    with pytest.raises(SectionNotCompact):
        section(isotropic65, ORIGIN, 1.0, require_compact=True)
    with pytest.raises(EmptySection):
        section(isotropic65, (5.0, 5.0), 0.1)
    with pytest.raises(ValueError):
        section(isotropic65, ORIGIN, -0.1)


def test_section_ladder_is_nested(skew65):
    ladder = section_ladder(skew65, ORIGIN, [0.02, 0.04, 0.08, 0.16])
    for small, large in zip(ladder, ladder[1:]):
        assert np.all(large.mask[small.mask])


@settings(max_examples=25, deadline=None)
@given(h1=st.floats(0.005, 0.3), h2=st.floats(0.005, 0.3))
def test_sections_monotone_in_height(perturbed65, h1, h2):
    lo, hi = sorted((h1, h2))
    small = section(perturbed65, ORIGIN, lo)
    large = section(perturbed65, ORIGIN, hi)
    assert np.all(large.mask[small.mask])
    assert small.volume <= large.volume


@settings(max_examples=15, deadline=None)
@given(c0=st.floats(-2.0, 2.0), c1=st.floats(-2.0, 2.0), c2=st.floats(-2.0, 2.0), h=st.floats(0.01, 0.2))
def test_sections_ignore_affine_terms(c0, c1, c2, h):
    base = family_potential("skew", 33, eps=0.3)
    shifted_phi = GridFunction2D.square(lambda x1, x2: 0.5 * (x1 ** 2 + x2 ** 2) + 0.3 * x1 * x2
                                        + c0 + c1 * x1 + c2 * x2, 33)
    shifted = build_potential(shifted_phi, base.lambda_lo, base.lambda_hi)
    gap = section_gap(base, ORIGIN)
    ties = np.abs(gap - h) < 1e-9
    assert np.all((section(base, ORIGIN, h).mask == section(shifted, ORIGIN, h).mask) | ties)


def test_modulus_of_isotropic(isotropic65):
    spacing = max(isotropic65.phi.spacing)
    ts = spacing * np.arange(1, 9)
    profile = modulus_of_convexity(isotropic65, ts)
    width = 2.0 * spacing
    assert np.all(profile.ms >= 0.5 * ts ** 2 - 1e-12)
    assert np.all(profile.ms <= 0.5 * (ts + width) ** 2 + 1e-12)
    assert np.all(np.diff(profile.ms) >= 0)
    assert all(n > 0 for n in profile.pairs_used)


def test_modulus_subsampling_is_seeded(perturbed65):
    ts = [0.1, 0.2]
    a = modulus_of_convexity(perturbed65, ts, max_pairs=5000, seed=3)
    b = modulus_of_convexity(perturbed65, ts, max_pairs=5000, seed=3)
    assert np.array_equal(a.ms, b.ms)
    assert np.all(a.ms > 0)


def test_modulus_beyond_domain_diameter():
    p = family_potential("isotropic", 17)
    profile = modulus_of_convexity(p, [0.25, 0.5, 4.0, 5.0])
    assert profile.pairs_used[2] == 0 and profile.pairs_used[3] == 0
    assert np.all(np.isfinite(profile.ms))
    assert profile.ms[2] == profile.ms[1]
    assert profile.ms[3] == profile.ms[1]


def test_modulus_without_any_pairs_is_nan():
    p = family_potential("isotropic", 17)
    profile = modulus_of_convexity(p, [4.0])
    assert np.isnan(profile.ms[0])


def test_section_volume_of_anisotropic_quadratic():
    # (4 x1^2 + x2^2) / 2 has elliptic sections of area pi h
    p = family_potential("diagonal", 129, a=4.0, b=1.0)
    lo, hi = section_volume_fit(p, ORIGIN, [0.04, 0.08, 0.16, 0.24])
    assert lo == pytest.approx(np.pi, rel=0.1)
    assert hi == pytest.approx(np.pi, rel=0.1)


@pytest.mark.slow
def test_divergence_free_residual_converges_at_second_order():
    residuals = [divergence_free_residual(cofactor(family_potential("perturbed", n, amplitude=0.05)))
                 for n in (65, 129)]
    assert residuals[1] > 0.0
    assert residuals[0] / residuals[1] >= 3.5
