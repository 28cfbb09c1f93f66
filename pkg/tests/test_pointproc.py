"""
Tests of window counts and total variation distances.
"""

import math

import numpy as np
import pytest
from scipy import stats

from src.spectral.tree import TreeIndex
from src.stochastic.dos import CharFnSpec, lambda_ell_quadrature
from src.stochastic.perturb import AlphaTable, UField, sample_u_batch
from src.stochastic.pointproc import (
    DiscreteLaw,
    Window,
    count_W,
    count_W_batch,
    empirical_law,
    iid_envelope,
    poisson_law,
    tv,
    tv_estimate,
    tv_interval,
    tv_poisson_triangle,
)


def test_window_geometry(binary_tree):
    window = Window.build(binary_tree, 3, t0=0.25, c=math.pi)
    assert window.order == 8
    assert window.half_width == pytest.approx(math.pi / 16)
    assert window.width == pytest.approx(math.pi / 8)
    low, high = window.eigenvalue_interval(2.0)
    assert low == pytest.approx(2.0 * (1.25 - math.pi / 16))
    assert high == pytest.approx(2.0 * (1.25 + math.pi / 16))


def test_count_includes_endpoints():
    window = Window(t0=0.0, c=1.0, level=1, order=2)
    field = UField(level=1, values=np.array([0.25, 0.3]), shared_tail=0.0, depth=1)
    assert count_W(field, window) == 1
    batch = np.array([[0.25, -0.25], [0.0, 0.9], [0.5, 0.6]])
    np.testing.assert_array_equal(count_W_batch(batch, window), [2, 1, 0])


def test_count_checks_shapes():
    window = Window(t0=0.0, c=1.0, level=2, order=4)
    with pytest.raises(ValueError):
        count_W_batch(np.zeros((3, 8)), window)
    field = UField(level=1, values=np.zeros(2), shared_tail=0.0, depth=1)
    with pytest.raises(ValueError):
        count_W(field, window)


def test_empirical_law():
    law = empirical_law([0, 1, 1, 3])
    np.testing.assert_allclose(law.probs, [0.25, 0.5, 0.0, 0.25])
    assert law.mean() == pytest.approx(1.25)
    with pytest.raises(ValueError):
        empirical_law([])


def test_poisson_law():
    law = poisson_law(2.5)
    assert law.tail < 1e-10
    assert law.mean() == pytest.approx(2.5, abs=1e-8)
    degenerate = poisson_law(0.0)
    assert degenerate.probs[0] == 1.0
    with pytest.raises(ValueError):
        poisson_law(-1.0)


@pytest.mark.parametrize("lam", [0.1, 1.0, 3.0])
def test_tv_point_mass_against_poisson(lam):
    assert tv(DiscreteLaw(probs=[1.0]), poisson_law(lam)) == pytest.approx(1.0 - math.exp(-lam))


def test_tv_is_a_metric():
    laws = [poisson_law(0.5), poisson_law(1.0), empirical_law([0, 0, 1, 2, 4])]
    for a in laws:
        assert tv(a, a) == 0.0
        for b in laws:
            assert tv(a, b) == pytest.approx(tv(b, a))
            for c in laws:
                assert tv(a, c) <= tv(a, b) + tv(b, c) + 1e-15


def test_tv_interval_brackets_unresolved_tails():
    a = DiscreteLaw(probs=[0.5, 0.3], tail=0.2)
    b = DiscreteLaw(probs=[0.5, 0.4], tail=0.1)
    low, high = tv_interval(a, b)
    assert low == pytest.approx(0.1)
    assert high == pytest.approx(0.2)


def test_tv_cuts_both_laws_at_the_unresolved_tail():
    counts = DiscreteLaw(probs=[0.2, 0.3, 0.1, 0.4])
    target = poisson_law(1.0, kmax=2)
    e = math.exp(-1.0)
    core = abs(0.2 - e) + abs(0.3 - e) + abs(0.1 - e / 2)
    expected = 0.5 * core + 0.5 * abs(0.4 - target.tail)
    assert tv(counts, target) == pytest.approx(expected, abs=1e-12)
    assert tv(target, counts) == pytest.approx(expected, abs=1e-12)

    assert tv(poisson_law(1.0), poisson_law(1.0, kmax=3)) == pytest.approx(0.0, abs=1e-12)
    low, high = tv_interval(poisson_law(1.0), poisson_law(1.0, kmax=3))
    assert low == pytest.approx(0.0, abs=1e-12)
    assert high == pytest.approx(stats.poisson.sf(3, 1.0), rel=1e-9)


def test_tv_estimate_of_a_point_mass():
    estimate = tv_estimate(np.zeros(1000, dtype=int), poisson_law(1.0))
    assert estimate.value == pytest.approx(1.0 - math.exp(-1.0))
    assert estimate.stderr == 0.0
    assert estimate.trials == 1000


def test_poisson_triangle():
    assert tv_poisson_triangle(1.0, 1.0, 0.1) == 0.1
    shifted = tv_poisson_triangle(1.0, 1.2, 0.1)
    assert shifted == pytest.approx(0.1 + tv(poisson_law(1.0, 60), poisson_law(1.2, 60)))


def test_iid_envelope():
    assert iid_envelope(0.5, 8) == pytest.approx(0.25 / 16)
    assert iid_envelope(2.0, 8) == pytest.approx(2.0 / 16)


def test_single_term_counts_are_binomial(uniform_noise):
    """Independent uniform sites give W ~ Bin(π_ℓ, c/(2π_ℓ)) within Le Cam's distance of Poisson."""
    tree = TreeIndex.constant(2, 6)
    window = Window.build(tree, 6, t0=0.0, c=math.pi)
    values = sample_u_batch(tree, AlphaTable.single_term(), uniform_noise, 6, 3, range(20_000), 6)
    counts = count_W_batch(values, window)

    p = math.pi / 128
    binomial = DiscreteLaw(probs=stats.binom.pmf(np.arange(65), 64, p))
    estimate = tv_estimate(counts, binomial)
    # diagnostic bounds the bias of the empirical TV, stderr its fluctuation
    assert estimate.value < estimate.diagnostic + 3 * estimate.stderr

    poisson = tv_estimate(counts, poisson_law(math.pi / 2))
    assert poisson.value < iid_envelope(math.pi / 2, 64) + poisson.diagnostic + 3 * poisson.stderr


def test_tv_of_equal_poisson_laws():
    assert tv(poisson_law(1.7), poisson_law(1.7)) == 0.0
    assert tv(DiscreteLaw(probs=[1.0]), poisson_law(1.0)) == pytest.approx(1 - math.exp(-1), abs=1e-10)


def test_tv_metric_axioms_on_random_laws():
    rng = np.random.default_rng(11)

    def random_law():
        weights = rng.random(int(rng.integers(1, 8)))
        return DiscreteLaw(probs=weights / weights.sum())

    for _ in range(500):
        a, b, c = random_law(), random_law(), random_law()
        assert 0.0 <= tv(a, b) <= 1.0
        assert tv(a, b) == pytest.approx(tv(b, a), abs=1e-15)
        assert tv(a, c) <= tv(a, b) + tv(b, c) + 1e-12


def test_single_term_mean_count(uniform_noise):
    tree = TreeIndex.constant(2, 8)
    window = Window.build(tree, 8, t0=0.0, c=math.pi)
    values = sample_u_batch(tree, AlphaTable.single_term(), uniform_noise, 8, 5, range(20_000), 8)
    counts = count_W_batch(values, window)
    stderr = counts.std(ddof=1) / math.sqrt(counts.size)
    assert counts.mean() == pytest.approx(math.pi / 2, abs=4 * stderr)


@pytest.mark.slow
@pytest.mark.parametrize("level", [6, 8])
def test_padic_mean_count_matches_quadrature(level, padic_alpha, uniform_noise):
    tree = TreeIndex.constant(2, level)
    window = Window.build(tree, level, t0=0.0, c=math.pi)
    depth = padic_alpha.required_depth(tree.radix, level, math.pi)
    values = sample_u_batch(tree, padic_alpha, uniform_noise, level, 0, range(100_000), depth)
    counts = count_W_batch(values, window)
    stderr = counts.std(ddof=1) / math.sqrt(counts.size)
    quad = lambda_ell_quadrature(window.order, CharFnSpec.build(padic_alpha, uniform_noise), math.pi, 0.0)
    assert counts.mean() == pytest.approx(quad.value, abs=3 * stderr + quad.error)
