"""
Tests of the neighbourhood choice and the Chen-Stein bound terms.
"""

import logging
import math
from fractions import Fraction

import numpy as np
import pytest

from src.bounds.chen_stein import (
    assemble_bound_report,
    b1_double_sum,
    b1_exact,
    b2_bound,
    b3_bound,
    constant_C,
    estimate_b2,
    estimate_b3_pre_triangle,
    mean_with_stderr,
    neighbourhood_pairs,
    poisson_prefactor,
    theorem_bound,
)
from src.bounds.neighborhoods import (
    check_choice,
    compare_powers,
    feasible_ks,
    select_k,
    sequence_stats,
)
from src.spectral.tree import RadixSequence, TreeIndex
from src.stochastic.noise import NoiseSpec
from src.stochastic.perturb import AlphaTable, sample_u_batch
from src.stochastic.pointproc import Window
from src.utils.errors import BoundsError, FeasibilityError

PADIC_ENVELOPE = (2 / 3) * (math.pi + math.pi**2 * 2 / 3 + 16)


def test_compare_powers_exact():
    assert compare_powers([(2, Fraction(1, 3))], [(2, Fraction(1, 3))]) == 0
    assert compare_powers([(8, Fraction(1, 3))], [(2, 1)]) == 0
    assert compare_powers([(3, 1)], [(2, Fraction(3, 2))]) == 1
    assert compare_powers([(2, 0.7071)], [(2, 0.7072)]) == -1


def test_sequence_stats_bounded():
    stats = sequence_stats(RadixSequence(radices=(2, 3, 2, 5)), 1.0, horizon=8)
    assert stats.bounded
    assert (stats.m, stats.M) == (2, 5)


def test_sequence_stats_unbounded():
    stats = sequence_stats(RadixSequence.linear(1, 1, 6), 3.0, horizon=8)
    assert not stats.bounded
    assert stats.indices[:5] == (0, 1, 2, 3, 4)
    assert stats.running_max(4) == 5
    assert stats.running_max(0) == 1


def test_select_k_bounded_example():
    stats = sequence_stats(RadixSequence.constant(2, 16), 1.0)
    choice = select_k(9, stats)
    assert choice.k == 6
    assert choice.target == pytest.approx(1 / 8)
    assert choice.branch == "bounded"
    assert check_choice(choice, stats)


def test_select_k_unbounded_example():
    stats = sequence_stats(RadixSequence.linear(1, 1, 6), 3.0, horizon=8)
    choice = select_k(5, stats)
    assert choice.branch == "unbounded"
    assert choice.target == pytest.approx(1 / 5)
    assert choice.k in feasible_ks(5, stats)
    assert choice.audit


def test_select_k_level_one_is_trivial():
    stats = sequence_stats(RadixSequence.linear(1, 1, 6), 3.0, horizon=4)
    choice = select_k(1, stats)
    assert choice.k == 0
    assert choice.trivial
    assert theorem_bound(choice, 50.0) == 1.0


def test_select_k_rejects_level_zero():
    stats = sequence_stats(RadixSequence.constant(2, 8), 1.0)
    with pytest.raises(BoundsError):
        select_k(0, stats)


def test_select_k_random_bounded_sequences():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        radices = tuple(int(n) for n in rng.integers(2, 7, size=int(rng.integers(1, 6))))
        gamma = float(rng.choice([0.5, 1.0, 3.0]))
        stats = sequence_stats(RadixSequence(radices=radices), gamma, horizon=14)
        for level in range(1, 15):
            choice = select_k(level, stats)
            assert 0 <= choice.k < level
            assert check_choice(choice, stats), (radices, gamma, level)


def test_select_k_random_unbounded_sequences():
    rng = np.random.default_rng(2025)
    for _ in range(100):
        slope, intercept = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        gamma = float(rng.choice([0.5, 1.0, 3.0]))
        radix = RadixSequence.linear(slope, intercept, int(rng.integers(1, 5)))
        stats = sequence_stats(radix, gamma, horizon=14)
        for level in range(1, 15):
            choice = select_k(level, stats)
            assert choice.branch == "unbounded"
            assert check_choice(choice, stats), (slope, intercept, gamma, level)


@pytest.mark.parametrize("slope,intercept,gamma", [(1, 1, 3.0), (1, 1, 1.0), (2, 1, 2.0)])
def test_select_k_unbounded_sequences(slope, intercept, gamma):
    stats = sequence_stats(RadixSequence.linear(slope, intercept, 4), gamma, horizon=15)
    for level in range(2, 16):
        choice = select_k(level, stats)
        assert check_choice(choice, stats), level


def test_select_k_recursion_fallback_is_logged(monkeypatch, caplog):
    stats = sequence_stats(RadixSequence.linear(1, 1, 4), 1.0, horizon=10)
    assert not select_k(8, stats).fallback

    monkeypatch.setattr("src.bounds.neighborhoods.check_choice", lambda choice, stats: False)
    with caplog.at_level(logging.WARNING, logger="src.bounds.neighborhoods"):
        choice = select_k(8, stats)
    assert choice.fallback
    assert choice.k == feasible_ks(8, stats)[-1]
    assert "misses the target" in caplog.text


def test_poisson_prefactor():
    assert poisson_prefactor(0.0) == 1.0
    assert poisson_prefactor(2.0) == pytest.approx((1 - math.exp(-2.0)) / 2.0)
    assert poisson_prefactor(1e-12) == pytest.approx(1.0)


def test_b1_matches_double_sum():
    tree = TreeIndex.constant(2, 4)
    lam = 1.3
    exact = b1_exact(lam, tree.order(2), tree.order(4))
    assert b1_double_sum(tree, 4, 2, lam / 16) == pytest.approx(exact)
    with pytest.raises(BoundsError):
        b1_exact(lam, 32, 16)


def test_b2_bound_example():
    assert b2_bound(math.pi, 0.75, 0.5, 1, 32) == pytest.approx(math.pi**2 / 72)


def test_b3_bound():
    value = b3_bound(1.0, 0.75, 0.5, 4.0, 9 * math.log(2), 7 * math.log(2), 1.0)
    assert value == pytest.approx(16 / 0.75 * 0.5 * 0.5 * 2.0**-5)
    assert b3_bound(0.0, 0.75, 0.5, 4.0, 1.0, 1.0, 1.0) == 0.0
    with pytest.raises(BoundsError):
        b3_bound(-1.0, 0.75, 0.5, 4.0, 1.0, 1.0, 1.0)


def test_constant_c_envelope():
    const = constant_C(1.0, math.pi, 0.75, 0.5, 1.0)
    assert const.envelope == pytest.approx(PADIC_ENVELOPE)
    assert const.envelope == pytest.approx(17.15, abs=5e-3)
    assert const.dominated
    for lam in np.linspace(0.0, math.pi * 2 / 3, 25):
        assert constant_C(float(lam), math.pi, 0.75, 0.5, 1.0).dominated


def test_constant_c_envelope_random_parameters():
    rng = np.random.default_rng(17)
    for _ in range(1000):
        c = float(rng.uniform(0.1, 10.0))
        alpha0 = float(rng.uniform(0.05, 1.0))
        eta_sup = float(rng.uniform(0.05, 2.0))
        K = float(rng.uniform(0.1, 5.0))
        lam = float(rng.uniform(1e-6, 1.0)) * c * eta_sup / alpha0
        const = constant_C(lam, c, alpha0, eta_sup, K)
        assert const.dominated, (lam, c, alpha0, eta_sup, K)
        assert const.value <= const.envelope * (1.0 + 1e-12)


def test_b1_and_b2_grow_with_the_neighbourhood():
    rng = np.random.default_rng(31)
    for _ in range(200):
        radices = tuple(int(n) for n in rng.integers(2, 7, size=int(rng.integers(2, 9))))
        tree = TreeIndex.from_radices(*radices)
        level = tree.depth
        lam = float(rng.uniform(0.05, 5.0))
        for k in range(level):
            small, large = tree.order(k), tree.order(k + 1)
            assert b1_exact(lam, large, tree.order(level)) >= b1_exact(lam, small, tree.order(level))
            assert b2_bound(math.pi, 0.75, 0.5, large, tree.order(level)) >= b2_bound(
                math.pi, 0.75, 0.5, small, tree.order(level)
            )


def test_constant_c_beyond_its_envelope():
    assert not constant_C(100.0, math.pi, 0.75, 0.5, 1.0).dominated
    with pytest.raises(BoundsError):
        constant_C(1.0, math.pi, 0.75, 0.0, 1.0)


def test_padic_report(padic_alpha):
    stats = sequence_stats(RadixSequence.constant(2, 16), padic_alpha.gamma)
    report = assemble_bound_report(9, stats, padic_alpha, NoiseSpec.uniform(), math.pi, 1.4)
    assert report.k == 6
    assert report.theorem_bound == pytest.approx(report.constant_c / 8)
    assert report.assembled <= report.theorem_bound
    assert report.applicable
    assert report.dominated
    assert report.b1 == pytest.approx(1.4**2 / 8)


def test_unbounded_report():
    alpha = AlphaTable.explicit(
        [0.9375, 0.061728395061728395, 0.000768590856481482, 3.0092592592592593e-06, 4.8188097756e-09],
        3.7210886e-12,
        K=1.01,
        gamma=3.0,
    )
    stats = sequence_stats(RadixSequence.linear(1, 1, 6), 3.0, horizon=5)
    report = assemble_bound_report(5, stats, alpha, NoiseSpec.uniform(), math.pi, 1.5)
    assert report.theorem_bound == pytest.approx(report.constant_c / 5)
    assert report.applicable
    assert not report.trivial


def test_single_term_report_is_not_applicable(single_term):
    stats = sequence_stats(RadixSequence.constant(2, 16), single_term.gamma)
    report = assemble_bound_report(6, stats, single_term, NoiseSpec.uniform(), math.pi, math.pi / 2)
    assert not report.applicable


def test_mean_with_stderr():
    value = mean_with_stderr(np.array([1.0, 3.0]))
    assert value.value == 2.0
    assert value.stderr == pytest.approx(1.0)
    with pytest.raises(FeasibilityError):
        mean_with_stderr(np.array([1.0]))


def test_neighbourhood_pairs():
    window = Window(t0=0.0, c=0.4, level=2, order=4)
    values = np.array([[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0]])
    np.testing.assert_array_equal(neighbourhood_pairs(values, window, 2), [2, 4])
    with pytest.raises(BoundsError):
        neighbourhood_pairs(values, window, 3)


def test_b2_estimate_for_independent_sites(single_term, uniform_noise):
    tree = TreeIndex.constant(2, 6)
    window = Window.build(tree, 6, 0.0, math.pi)
    values = sample_u_batch(tree, single_term, uniform_noise, 6, 1, range(20_000), 6)
    estimate = estimate_b2(values, window, 8)
    expected = 64 * 7 * (math.pi / 128) ** 2
    assert estimate.value == pytest.approx(expected, abs=4 * estimate.stderr)


@pytest.mark.slow
def test_b2_bound_covers_its_estimate(padic_alpha, uniform_noise):
    tree = TreeIndex.constant(2, 8)
    window = Window.build(tree, 8, 0.0, math.pi)
    values = sample_u_batch(tree, padic_alpha, uniform_noise, 8, 5, range(20_000), 20)
    for k in (2, 4, 6):
        estimate = estimate_b2(values, window, tree.order(k))
        bound = b2_bound(math.pi, padic_alpha.alpha0, 0.5, tree.order(k), tree.order(8))
        assert bound >= estimate.value - 3 * estimate.stderr, k


def test_b3_estimate(padic_alpha, single_term, uniform_noise):
    tree = TreeIndex.constant(2, 6)
    window = Window.build(tree, 6, 0.0, math.pi)
    flat = estimate_b3_pre_triangle(window, 3, single_term, uniform_noise, 1.5, 6, seed=0,
                                    outer=50, inner=200)
    assert flat.value == 0.0

    first = estimate_b3_pre_triangle(window, 3, padic_alpha, uniform_noise, 1.5, 20, seed=0,
                                     outer=200, inner=500)
    again = estimate_b3_pre_triangle(window, 3, padic_alpha, uniform_noise, 1.5, 20, seed=0,
                                     outer=200, inner=500)
    assert first == again
    assert first.value >= 0.0
    assert first.trials == 200
    with pytest.raises(BoundsError):
        estimate_b3_pre_triangle(window, 6, padic_alpha, uniform_noise, 1.5, 20, seed=0)
