"""
Tests of the characteristic function and the density of states.
"""

import math

import numpy as np
import pytest
from scipy import integrate

from src.stochastic.dos import (
    CharFnSpec,
    QuadratureSettings,
    choose_cutoff,
    eigenvalue_scale_density,
    empirical_density,
    eta_at,
    eta_grid,
    lambda_ell_quadrature,
    phi,
    tail_envelope,
)
from src.stochastic.noise import NoiseSpec
from src.stochastic.perturb import AlphaTable, perturbed_eigenvalues, sample_u0
from src.utils.errors import FeasibilityError
from src.utils.utilities import trial_generator

# two equal uniform terms: U is triangular on (-1, 1) with density 1 - |t|
HALVES = AlphaTable.explicit([0.5, 0.5], 0.0, K=2.0, gamma=1.0)
COARSE = QuadratureSettings(tail_tol=1e-3, max_cutoff=4096.0, max_halvings=4)


def test_phi_at_zero(padic_alpha, uniform_noise):
    spec = CharFnSpec.build(padic_alpha, uniform_noise)
    assert complex(phi(0.0, spec)) == 1.0
    assert np.all(np.abs(phi(np.linspace(-50, 50, 101), spec)) <= 1.0 + 1e-12)


def test_phi_single_term(single_term, uniform_noise):
    spec = CharFnSpec.build(single_term, uniform_noise)
    t = np.array([0.5, 2.0, 9.0])
    np.testing.assert_allclose(phi(t, spec).real, np.sin(t) / t, atol=1e-15)
    assert spec.single_uniform
    assert spec.omega == pytest.approx(1.0)


def test_padic_product_depth(padic_alpha, uniform_noise):
    spec = CharFnSpec.build(padic_alpha, uniform_noise)
    assert spec.depth > 0
    assert padic_alpha.a(spec.depth) * QuadratureSettings().max_cutoff**2 / 2 <= QuadratureSettings().tail_tol


def test_tail_envelope():
    assert tail_envelope([(1.0, 0.5), (1.0, 0.5)], 10.0) == pytest.approx(0.4)
    assert tail_envelope([(1.0, 0.5)], 10.0) == math.inf


def test_cutoff_needs_two_factors():
    with pytest.raises(FeasibilityError):
        choose_cutoff([(1.0, 1.0)], 1.0, QuadratureSettings())


@pytest.mark.parametrize("t", [0.0, 0.5, 0.8])
def test_single_uniform_density(single_term, uniform_noise, t):
    estimate = eta_at(t, CharFnSpec.build(single_term, uniform_noise))
    assert estimate.value == pytest.approx(0.5, abs=1e-4)
    assert estimate.flag == "corrected"


def test_single_uniform_density_vanishes_outside(single_term, uniform_noise):
    estimate = eta_at(1.5, CharFnSpec.build(single_term, uniform_noise))
    assert estimate.value == pytest.approx(0.0, abs=1e-4)


def test_triangular_density(uniform_noise):
    spec = CharFnSpec.build(HALVES, uniform_noise, COARSE)
    estimates = eta_grid([0.0, 0.5, -0.25], spec, COARSE)
    for estimate in estimates:
        assert estimate.value == pytest.approx(1.0 - abs(estimate.t), abs=1e-3)
        assert estimate.method == "quadrature"


def test_lambda_single_term(single_term, uniform_noise):
    """Independent uniform sites: λ(ℓ) = π_ℓ · (c/π_ℓ)/2 = c/2."""
    spec = CharFnSpec.build(single_term, uniform_noise)
    result = lambda_ell_quadrature(64, spec, math.pi, 0.0)
    assert result.value == pytest.approx(math.pi / 2, abs=1e-4)
    assert lambda_ell_quadrature(64, spec, 0.0, 0.0).value == 0.0


def test_lambda_triangular(uniform_noise):
    spec = CharFnSpec.build(HALVES, uniform_noise, COARSE)
    result = lambda_ell_quadrature(16, spec, math.pi, 0.5, COARSE)
    h = math.pi / 32
    exact = 16 * (h * 2 * 0.5)
    assert result.value == pytest.approx(exact, abs=2e-2)


def test_empirical_density_uniform():
    samples = trial_generator(0, 0).uniform(-1.0, 1.0, 200_000)
    histogram = empirical_density(samples, center=0.1, width=0.1)
    estimate = histogram.at(0.1)
    assert estimate.value == pytest.approx(0.5, abs=4 * estimate.error)
    assert estimate.method == "histogram"
    assert 0.1 in np.round(histogram.centers, 12)


def test_empirical_density_needs_samples():
    with pytest.raises(FeasibilityError):
        empirical_density(np.zeros(10), min_samples=100)


def test_eigenvalue_scale_density(single_term, uniform_noise):
    estimate = eta_at(0.0, CharFnSpec.build(single_term, uniform_noise))
    scaled = eigenvalue_scale_density(estimate, 2.0)
    assert scaled.t == 2.0
    assert scaled.value == pytest.approx(estimate.value / 2.0)


@pytest.mark.slow
def test_padic_density_matches_histogram(padic_alpha):
    noise = NoiseSpec.uniform()
    spec = CharFnSpec.build(padic_alpha, noise)
    samples = sample_u0(padic_alpha, noise, 1_000_000, seed=0, depth=spec.depth)
    for t in (0.0, 0.3, -0.6):
        quad = eta_at(t, spec)
        hist = empirical_density(samples, center=t, width=0.1).at(t)
        assert quad.value <= noise.density_sup / padic_alpha.alpha0 + 1e-9
        assert abs(quad.value - hist.value) < 4 * hist.error + 0.02


def test_phi_is_symmetric(padic_alpha, uniform_noise):
    spec = CharFnSpec.build(padic_alpha, uniform_noise)
    t = np.linspace(0.1, 40.0, 57)
    np.testing.assert_array_equal(phi(-t, spec), phi(t, spec))


def test_phi_matches_deep_product(padic_alpha, uniform_noise):
    spec = CharFnSpec.build(padic_alpha, uniform_noise)
    reference = CharFnSpec(alpha=padic_alpha, noise=uniform_noise, depth=60)
    assert spec.depth < 60
    assert abs(complex(phi(10.0, spec)) - complex(phi(10.0, reference))) < 1e-12


def test_density_integrates_to_one(uniform_noise):
    spec = CharFnSpec.build(HALVES, uniform_noise, COARSE)
    grid = np.linspace(-1.0, 1.0, 81)
    values = [estimate.value for estimate in eta_grid(grid, spec, COARSE)]
    assert integrate.simpson(values, x=grid) == pytest.approx(1.0, abs=1e-3)


def test_eigenvalue_histogram_follows_the_affine_map(uniform_noise):
    lam_h, t0 = 2.0, 0.3
    samples = sample_u0(HALVES, uniform_noise, 400_000, seed=6, depth=1)
    eigenvalues = perturbed_eigenvalues(samples, lam_h)
    tau0 = lam_h * (1.0 + t0)
    hist = empirical_density(eigenvalues, center=tau0, width=0.1, support=(0.0, 2.0 * lam_h)).at(tau0)

    quad = eigenvalue_scale_density(
        eta_at(t0, CharFnSpec.build(HALVES, uniform_noise, COARSE), COARSE), lam_h
    )
    assert quad.t == pytest.approx(tau0)
    assert quad.value == pytest.approx((1.0 - t0) / lam_h, abs=1e-3)
    assert abs(hist.value - quad.value) < 4 * hist.error + quad.error + 1e-3


def test_histogram_stays_under_density_bound(padic_alpha, uniform_noise):
    samples = sample_u0(padic_alpha, uniform_noise, 200_000, seed=1, depth=20)
    histogram = empirical_density(samples)
    cap = uniform_noise.density_sup / padic_alpha.alpha0
    assert np.all(histogram.values <= cap + 4 * histogram.errors)
    assert histogram.values.max() > 0.5 * cap
