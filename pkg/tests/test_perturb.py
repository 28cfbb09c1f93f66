"""
Tests of the alpha tables, the U field and the conditioning identity.
"""

import math

import numpy as np
import pytest
from scipy import stats

from src.spectral.laplacian import CouplingSpec, MeasureProfile
from src.spectral.tree import RadixSequence, TreeIndex
from src.stochastic.noise import TwoPointNoise, UniformNoise
from src.stochastic.perturb import (
    AlphaTable,
    IndicatorSpec,
    conditioning_oracle,
    perturbed_eigenvalues,
    sample_u0,
    sample_u_batch,
    sample_u_field,
    u_from_epsilons,
    verify_conditioning_identity,
)
from src.utils.errors import FeasibilityError


@pytest.mark.parametrize("p", [2, 3, 5])
@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0])
def test_padic_tail_is_closed_form(p, alpha):
    table = AlphaTable.padic(p, alpha, depth=16)
    radix = RadixSequence.constant(p, 16)
    for level in range(13):
        explicit = math.fsum(table.values[level:]) + table.remainder
        assert explicit == pytest.approx(p ** (-alpha * level), rel=1e-12)
        assert table.tail_from(level) == pytest.approx(p ** (-alpha * level), rel=1e-15)
    assert table.K == 1.0
    assert table.gamma == pytest.approx(alpha - 1.0)
    assert table.check_tail_condition(radix)


def test_padic_alpha0(padic_alpha):
    assert padic_alpha.alpha0 == pytest.approx(0.75)
    assert padic_alpha.alpha(70) == pytest.approx(0.75 * 4.0**-70)
    assert padic_alpha.a(0) == pytest.approx(0.25)


def test_table_from_fractional_coupling_matches_padic():
    tree = TreeIndex.constant(2, 8)
    spec = CouplingSpec.fractional(MeasureProfile.counting(tree), 2.0)
    table = AlphaTable.from_coupling(spec, tree.radix)
    reference = AlphaTable.padic(2, 2.0, depth=8)
    np.testing.assert_allclose(table.values, reference.values, rtol=1e-12)
    assert table.gamma == pytest.approx(1.0)
    assert table.K == pytest.approx(1.0)


def test_standard_coupling_needs_gamma():
    tree = TreeIndex.constant(2, 4)
    spec = CouplingSpec.standard(MeasureProfile.counting(tree))
    with pytest.raises(ValueError):
        AlphaTable.from_coupling(spec, tree.radix)


def test_table_validation():
    with pytest.raises(ValueError):
        AlphaTable.explicit([0.5, 0.3], 0.0, K=1.0, gamma=1.0)
    with pytest.raises(ValueError):
        AlphaTable.explicit([1.0, 0.0], 0.0, K=1.0, gamma=1.0)
    with pytest.raises(ValueError):
        AlphaTable.padic(2, 1.0)


def test_single_term_is_degenerate(single_term, binary_radix):
    assert single_term.degenerate
    assert single_term.required_depth(binary_radix, 4, math.pi) == 4
    assert single_term.tail_from(1) == 0.0


def test_required_depth(padic_alpha, binary_radix):
    depth = padic_alpha.required_depth(binary_radix, 3, math.pi, tolerance=1e-6)
    threshold = 1e-6 * math.pi / (2 * 2**3)
    assert 4.0**-depth < threshold
    assert 4.0 ** -(depth - 1) >= threshold
    with pytest.raises(FeasibilityError):
        padic_alpha.required_depth(binary_radix, 3, math.pi, tolerance=1e-30, max_depth=10)


def test_u_field_is_reproducible(binary_tree, padic_alpha, uniform_noise):
    first = sample_u_field(binary_tree, padic_alpha, uniform_noise, 3, seed=11, trial=5)
    again = sample_u_field(binary_tree, padic_alpha, uniform_noise, 3, seed=11, trial=5)
    other = sample_u_field(binary_tree, padic_alpha, uniform_noise, 3, seed=11, trial=6)
    np.testing.assert_array_equal(first.values, again.values)
    assert not np.array_equal(first.values, other.values)
    assert first.values.shape == (8,)
    assert np.all(np.abs(first.values) < 1.0)


def test_batch_rows_match_single_trials(binary_tree, padic_alpha, uniform_noise):
    batch = sample_u_batch(binary_tree, padic_alpha, uniform_noise, 2, 3, range(10, 14), depth=9)
    for row, trial in zip(batch, range(10, 14)):
        single = sample_u_field(binary_tree, padic_alpha, uniform_noise, 2, 3, trial, depth=9)
        np.testing.assert_allclose(row, single.values, rtol=0, atol=1e-15)


def test_field_is_translation_stationary(binary_tree, padic_alpha, uniform_noise):
    batch = sample_u_batch(binary_tree, padic_alpha, uniform_noise, 3, 11, range(10_000), depth=12)
    # leaves of one trial share their upper levels, so compare disjoint halves of the trials
    first_leaf = batch[:5_000, 0]
    last_leaf = batch[5_000:, binary_tree.leaf_count - 1]
    assert stats.ks_2samp(first_leaf, last_leaf).pvalue > 0.01

    chain = sample_u0(padic_alpha, uniform_noise, 5_000, seed=11, depth=12)
    assert stats.ks_2samp(last_leaf, chain).pvalue > 0.01


def test_single_term_field_is_iid(binary_tree, single_term, uniform_noise):
    field = sample_u_field(binary_tree, single_term, uniform_noise, 3, seed=1)
    assert field.shared_tail == 0.0
    assert len(np.unique(field.values)) == 8


def test_forced_zero_noise():
    tree = TreeIndex.constant(2, 2)
    table = AlphaTable.padic(2, 2.0, depth=4)
    zeros = [np.zeros(tree.ball_count(j)) for j in range(3)]
    values, shared = u_from_epsilons(tree, table, 2, zeros, np.zeros(2))
    np.testing.assert_array_equal(values, np.zeros(4))
    assert shared == 0.0

    values, shared = u_from_epsilons(tree, table, 2, zeros, np.array([1.0, -1.0]))
    expected = table.alpha(3) - table.alpha(4)
    np.testing.assert_allclose(values, np.full(4, expected))
    assert shared == pytest.approx(expected)


def test_ancestor_traversal():
    tree = TreeIndex.constant(2, 1)
    table = AlphaTable.explicit([0.5, 0.5], 0.0, K=2.0, gamma=1.0)
    values, _ = u_from_epsilons(tree, table, 1, [np.array([0.2, -0.4]), np.array([0.6])], np.zeros(0))
    np.testing.assert_allclose(values, [0.4, 0.1])


def test_perturbed_eigenvalues():
    np.testing.assert_allclose(perturbed_eigenvalues(np.array([0.25, -0.5]), 1.0), [1.25, 0.5])
    with pytest.raises(ValueError):
        perturbed_eigenvalues(np.zeros(2), 0.0)


def test_u0_independent_of_workers(padic_alpha, uniform_noise):
    serial = sample_u0(padic_alpha, uniform_noise, 5000, seed=2, depth=12, workers=1, chunk_size=700)
    pooled = sample_u0(padic_alpha, uniform_noise, 5000, seed=2, depth=12, workers=2, chunk_size=700)
    np.testing.assert_array_equal(serial, pooled)
    assert serial.shape == (5000,)


def test_conditioning_oracle_uniform():
    oracle = conditioning_oracle(IndicatorSpec(low=0.0, high=0.5), UniformNoise(), UniformNoise())
    assert oracle == pytest.approx(5 / 96, abs=1e-9)


def test_conditioning_identity_uniform():
    indicator = IndicatorSpec(low=0.0, high=0.5)
    check = verify_conditioning_identity(indicator, UniformNoise(), UniformNoise(), 200_000, seed=4)
    assert abs(check.lhs - check.rhs) < 4 * check.combined_stderr
    assert check.rhs == pytest.approx(5 / 96, abs=4 * check.rhs_stderr)


def test_conditioning_identity_trivial_indicators():
    always = verify_conditioning_identity(
        IndicatorSpec(low=-math.inf, high=math.inf), UniformNoise(), UniformNoise(), 1000, seed=0
    )
    assert always.lhs == 1.0 and always.rhs == 1.0
    never = verify_conditioning_identity(
        IndicatorSpec(low=1.0, high=-1.0), UniformNoise(), UniformNoise(), 1000, seed=0
    )
    assert never.lhs == 0.0 and never.rhs == 0.0


def test_conditioning_identity_discrete_x():
    indicator = IndicatorSpec(low=0.0, high=0.75)
    x = TwoPointNoise(amplitude=0.5, prob=0.3)
    check = verify_conditioning_identity(indicator, x, UniformNoise(), 100_000, seed=9)
    assert abs(check.lhs - check.rhs) < 4 * check.combined_stderr


@pytest.mark.slow
def test_conditioning_identity_large_sample():
    indicator = IndicatorSpec(low=0.0, high=0.5)
    check = verify_conditioning_identity(indicator, UniformNoise(), UniformNoise(), 1_000_000, seed=0)
    assert abs(check.lhs - 5 / 96) < 3 * check.lhs_stderr + 1e-3
