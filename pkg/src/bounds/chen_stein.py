"""
Chen-Stein bounds for the window counts W_ℓ.

With dependency neighbourhoods B_g = g + G_k the Arratia-Goldstein-Gordon inequality gives

    TV(W_ℓ, Poi(λ(ℓ))) ≤ (1 - e^{-λ})/λ · (b1 + b2) + b3,

where b1 is exact and b2, b3 are upper bounds. The Monte Carlo estimators at the end of the
module estimate the true b2 and the quantity that b3 bounds before its triangle inequality;
they are estimates, the closed forms are bounds, and reports keep the two apart.
"""

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.bounds.neighborhoods import NeighborhoodChoice, SequenceStats, select_k
from src.load_config import CFG
from src.spectral.tree import TreeIndex
from src.stochastic.noise import NoiseSpec
from src.stochastic.perturb import AlphaTable
from src.stochastic.pointproc import Window
from src.utils.errors import BoundsError, FeasibilityError
from src.utils.utilities import B3_STREAM, trial_generator

LOGGER = logging.getLogger(__name__)

# relative slack when checking the assembled bound against C · target
DOMINATION_SLACK = 1e-9


class ConstantC(BaseModel):
    """The constant C of the rate theorem and its λ-free envelope."""

    model_config = ConfigDict(frozen=True)

    value: float
    envelope: float
    dominated: bool


class MonteCarloValue(BaseModel):
    value: float
    stderr: float
    trials: int


class BoundReport(BaseModel):
    """Every term of the Poisson bound at one window level."""

    model_config = ConfigDict(frozen=True)

    level: int
    k: int
    branch: str
    target: float
    trivial: bool
    lambda_ell: float = Field(..., ge=0.0)
    b1: float = Field(..., ge=0.0)
    b2_bound: float = Field(..., ge=0.0)
    b3_bound: float = Field(..., ge=0.0)
    prefactor: float = Field(..., ge=0.0)
    constant_c: float = Field(..., ge=0.0)
    envelope: float = Field(..., ge=0.0)
    dominated: bool
    assembled: float = Field(..., ge=0.0)
    theorem_bound: float = Field(..., ge=0.0)
    applicable: bool


def poisson_prefactor(lam: float) -> float:
    """(1 - e^{-λ})/λ, equal to 1 at λ = 0."""
    if lam < 0:
        raise BoundsError(f"λ = {lam} is negative")
    if lam == 0.0:
        return 1.0
    return -math.expm1(-lam) / lam


def _check_positive(**values: float) -> None:
    for name, value in values.items():
        if value < 0 or not math.isfinite(value):
            raise BoundsError(f"{name} = {value} must be finite and non-negative")


def b1_exact(lam_ell: float, order_k: int, order_ell: int) -> float:
    """b1 = λ(ℓ)² π_k / π_ℓ."""
    _check_positive(lam_ell=lam_ell)
    if not 1 <= order_k <= order_ell:
        raise BoundsError(f"need 1 ≤ π_k ≤ π_ℓ, got {order_k} and {order_ell}")
    return lam_ell**2 * order_k / order_ell


def b1_double_sum(tree: TreeIndex, level: int, k: int, p: float) -> float:
    """Σ_g Σ_{h ∈ B_g} p² by enumerating the window."""
    if not 0 <= k < level:
        raise BoundsError(f"need 0 ≤ k < ℓ, got k = {k}, ℓ = {level}")
    window = TreeIndex(radix=tree.radix, depth=level)
    total = 0.0
    for g in range(window.leaf_count):
        neighbourhood = window.members(window.ancestors(g)[k])
        total += sum(p * p for _ in neighbourhood)
    return total


def b2_bound(c: float, alpha0: float, eta_sup: float, order_k: int, order_ell: int) -> float:
    """b2 ≤ (c²/α_0²) ‖η_ε‖² π_k / π_ℓ."""
    _check_positive(c=c, eta_sup=eta_sup)
    if alpha0 <= 0:
        raise BoundsError("α_0 must be positive")
    return (c / alpha0) ** 2 * eta_sup**2 * order_k / order_ell


def b3_bound(
    K: float,
    alpha0: float,
    eta_sup: float,
    lam_ell: float,
    log_order_ell: float,
    log_order_next: float,
    gamma: float,
) -> float:
    """
    b3 ≤ (16K/α_0)(1 ∧ λ^{-1/2}) ‖η_ε‖ π_ℓ π_{k+1}^{-(1+γ)}.

    The orders enter through their logarithms, so windows far beyond float range still work.
    """
    _check_positive(K=K, eta_sup=eta_sup, lam_ell=lam_ell)
    if alpha0 <= 0:
        raise BoundsError("α_0 must be positive")
    if K == 0.0 or eta_sup == 0.0:
        return 0.0
    damping = 1.0 if lam_ell <= 1.0 else lam_ell**-0.5
    log_ratio = log_order_ell - (1.0 + gamma) * log_order_next
    return 16.0 * K / alpha0 * damping * eta_sup * math.exp(log_ratio)


def constant_C(lam_ell: float, c: float, alpha0: float, eta_sup: float, K: float) -> ConstantC:
    """
    C = (1 - e^{-λ})/λ · (λ² + c²‖η_ε‖²/α_0²) + (16K/α_0)(1 ∧ λ^{-1/2})‖η_ε‖ and the envelope
    (‖η_ε‖/α_0)(c + c²‖η_ε‖/α_0 + 16K).

    C ≤ envelope whenever λ ≤ c‖η_ε‖/α_0, which holds for λ = λ(ℓ); other λ are reported
    with ``dominated`` False.
    """
    _check_positive(lam_ell=lam_ell, c=c, K=K)
    if eta_sup <= 0:
        raise BoundsError("the density bound ‖η_ε‖ must be positive")
    if alpha0 <= 0:
        raise BoundsError("α_0 must be positive")
    ratio = eta_sup / alpha0
    damping = 1.0 if lam_ell <= 1.0 else lam_ell**-0.5
    value = poisson_prefactor(lam_ell) * (lam_ell**2 + (c * ratio) ** 2) + 16.0 * K * damping * ratio
    envelope = ratio * (c + c**2 * ratio + 16.0 * K)
    dominated = value <= envelope * (1.0 + DOMINATION_SLACK)
    if not dominated:
        LOGGER.warning("C = %.6g exceeds its envelope %.6g at λ = %.6g", value, envelope, lam_ell)
    return ConstantC(value=value, envelope=envelope, dominated=dominated)


def theorem_bound(choice: NeighborhoodChoice, C: float) -> float:
    """C · target, capped at 1 when the target is trivial."""
    bound = C * choice.target
    return min(1.0, bound) if choice.trivial else bound


def assemble_bound_report(
    level: int,
    stats: SequenceStats,
    alpha: AlphaTable,
    noise: NoiseSpec,
    c: float,
    lam_ell: float,
    choice: NeighborhoodChoice | None = None,
) -> BoundReport:
    """
    All bound terms at window level ℓ for the given λ(ℓ).

    The assembled AGG value is checked against C · target; a violation means the inputs
    break the tail condition and raises ``BoundsError``.
    """
    if level < 1:
        raise BoundsError("window level must be at least 1")
    choice = select_k(level, stats) if choice is None else choice
    radix = stats.radix
    k = choice.k
    eta_sup = noise.density_sup

    b1 = b1_exact(lam_ell, radix.order(k), radix.order(level))
    b2 = b2_bound(c, alpha.alpha0, eta_sup, radix.order(k), radix.order(level))
    b3 = b3_bound(
        alpha.K,
        alpha.alpha0,
        eta_sup,
        lam_ell,
        radix.log_order(level),
        radix.log_order(k + 1),
        alpha.gamma,
    )
    prefactor = poisson_prefactor(lam_ell)
    assembled = prefactor * (b1 + b2) + b3
    const = constant_C(lam_ell, c, alpha.alpha0, eta_sup, alpha.K)
    bound = theorem_bound(choice, const.value)

    if not choice.trivial and assembled > const.value * choice.target * (1.0 + DOMINATION_SLACK):
        raise BoundsError(
            f"assembled bound {assembled:.6g} exceeds C·target {const.value * choice.target:.6g}"
            f" at level {level}"
        )
    applicable = not alpha.degenerate and alpha.check_tail_condition(radix, min(alpha.depth, level))
    if choice.trivial:
        LOGGER.warning("level %d: target %.3g is not below one, bound is trivial", level, choice.target)
    LOGGER.debug(
        "level %d: k=%d b1=%.4g b2<=%.4g b3<=%.4g bound=%.4g", level, k, b1, b2, b3, bound
    )
    return BoundReport(
        level=level,
        k=k,
        branch=choice.branch,
        target=choice.target,
        trivial=choice.trivial,
        lambda_ell=lam_ell,
        b1=b1,
        b2_bound=b2,
        b3_bound=b3,
        prefactor=prefactor,
        constant_c=const.value,
        envelope=const.envelope,
        dominated=const.dominated,
        assembled=assembled,
        theorem_bound=bound,
        applicable=applicable,
    )


def mean_with_stderr(samples: np.ndarray) -> MonteCarloValue:
    """Sample mean with its standard error."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise FeasibilityError("at least two trials are needed for a standard error")
    return MonteCarloValue(
        value=float(samples.mean()),
        stderr=float(samples.std(ddof=1) / math.sqrt(samples.size)),
        trials=int(samples.size),
    )


def neighbourhood_pairs(values: np.ndarray, window: Window, block: int) -> np.ndarray:
    """
    Σ_g Σ_{h ∈ B_g, h ≠ g} X_g X_h for each trial.

    Parameters:
        values (np.ndarray): (trials, π_ℓ) field values.
        window (Window): The window I_ℓ.
        block (int): π_k, the size of each neighbourhood.
    """
    values = np.asarray(values, dtype=float)
    trials, sites = values.shape
    if block < 1 or sites % block:
        raise BoundsError(f"block size {block} does not divide {sites}")
    hits = ((values >= window.low) & (values <= window.high)).astype(np.int64)
    per_block = hits.reshape(trials, sites // block, block).sum(axis=-1)
    return (per_block * (per_block - 1)).sum(axis=-1)


def estimate_b2(values: np.ndarray, window: Window, block: int) -> MonteCarloValue:
    """Monte Carlo estimate of the true b2 = Σ_g Σ_{h ∈ B_g, h ≠ g} E[X_g X_h]."""
    return mean_with_stderr(neighbourhood_pairs(values, window, block))


def _chain_sum(
    rng: np.random.Generator, alpha: AlphaTable, noise: NoiseSpec, levels: range, n: int
) -> np.ndarray:
    """n samples of Σ_{j ∈ levels} α_j ε_j along one ancestor chain."""
    if len(levels) == 0:
        return np.zeros(n)
    weights = np.array([alpha.alpha(j) for j in levels])
    columns = [family.sample(rng, (n, len(run))) for family, run in noise.groups(levels)]
    return np.hstack(columns) @ weights


def estimate_b3_pre_triangle(
    window: Window,
    k: int,
    alpha: AlphaTable,
    noise: NoiseSpec,
    lam_ell: float,
    depth: int,
    seed: int,
    outer: int | None = None,
    inner: int | None = None,
) -> MonteCarloValue:
    """
    Nested Monte Carlo of π_ℓ (1 ∧ λ^{-1/2}) E|q(T) - p_ℓ| with q(t) = P{Y ∈ I_ℓ - t}.

    Y = Σ_{j≤k} α_j ε_j is the neighbourhood part of U and T = Σ_{k<j≤D} α_j ε_j the part
    shared with everything outside the neighbourhood. One inner sample of Y, sorted, serves
    every outer draw of T; p_ℓ is the mean of the estimated q.
    """
    outer = CFG.b3_outer if outer is None else outer
    inner = CFG.b3_inner if inner is None else inner
    if outer < 2 or inner < 1:
        raise FeasibilityError("the b3 estimator needs at least two outer and one inner sample")
    if not 0 <= k < window.level:
        raise BoundsError(f"need 0 ≤ k < ℓ, got k = {k}, ℓ = {window.level}")

    inner_rng = trial_generator(seed, 2 * window.level, stream=B3_STREAM)
    outer_rng = trial_generator(seed, 2 * window.level + 1, stream=B3_STREAM)
    y = np.sort(_chain_sum(inner_rng, alpha, noise, range(0, k + 1), inner))
    t = _chain_sum(outer_rng, alpha, noise, range(k + 1, max(k + 1, depth + 1)), outer)

    upper = np.searchsorted(y, window.high - t, side="right")
    lower = np.searchsorted(y, window.low - t, side="left")
    q = (upper - lower) / inner
    deviation = np.abs(q - q.mean())
    damping = 1.0 if lam_ell <= 1.0 else lam_ell**-0.5
    scale = window.order * damping
    return MonteCarloValue(
        value=float(scale * deviation.mean()),
        stderr=float(scale * deviation.std(ddof=1) / math.sqrt(outer)),
        trials=outer,
    )
