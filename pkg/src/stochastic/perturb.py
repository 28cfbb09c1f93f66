"""
Random perturbation of the couplings and the stationary field it induces.

Each ball B carries an independent ε(B) with |ε| < 1; perturbing C(B) → C(B)(1 + ε(B))
turns the eigenvalue at leaf g into λ_H (1 + U_g) with

    U_g = Σ_{k≥0} α_k ε(g_k),

where g_k is the level-k ancestor of g. Inside a window G_ℓ the levels above ℓ are
common to all leaves and collapse into one shared value.
"""

import logging
import math
from collections.abc import Sequence
from functools import partial
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.load_config import CFG
from src.spectral.laplacian import CouplingSpec, eigenvalue
from src.spectral.tree import RadixSequence, TreeIndex
from src.stochastic.noise import NoiseFamily, NoiseSpec
from src.utils.errors import FeasibilityError, TreeIndexError
from src.utils.utilities import (
    DENSITY_STREAM,
    VERIFY_STREAM,
    chunk_ranges,
    ordered_map,
    trial_generator,
)

LOGGER = logging.getLogger(__name__)


class AlphaTable(BaseModel):
    """
    Weights α_0..α_D of the field, the mass ``remainder`` = Σ_{k>D} α_k and the constants
    of the tail condition Σ_{k≥ℓ} α_k ≤ K π_ℓ^{-(1+γ)}.

    The p-adic table stores (p, exponent) and evaluates tails in closed form at any depth.
    """

    model_config = ConfigDict(frozen=True)

    values: tuple[float, ...]
    remainder: float = Field(0.0, ge=0.0)
    K: float = Field(..., gt=0.0)
    gamma: float = Field(..., gt=0.0)
    source: Literal["padic", "single_term", "coupling", "explicit"] = "explicit"
    prime: int | None = Field(None, ge=2)
    exponent: float | None = Field(None, gt=1.0)

    @model_validator(mode="after")
    def _check_table(self) -> "AlphaTable":
        if not self.values:
            raise ValueError("the alpha table needs at least α_0")
        if any(not a > 0 for a in self.values):
            raise ValueError("every α_k must be strictly positive")
        total = math.fsum(self.values) + self.remainder
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"alpha weights must sum to 1, got {total!r}")
        if self.source == "padic" and (self.prime is None or self.exponent is None):
            raise ValueError("a p-adic table records its prime and exponent")
        return self

    @classmethod
    def padic(cls, p: int, alpha: float, depth: int = 64) -> "AlphaTable":
        """
        α_k = (1 - p^{-α}) p^{-αk}: the fractional Laplacian 𝔅^α normalised to λ_H = 1,
        so Σ_{k≥ℓ} α_k = p^{-αℓ}, K = 1 and γ = α - 1.
        """
        if alpha <= 1.0:
            raise ValueError("the p-adic table needs α > 1 for a positive γ")
        ratio = float(p) ** -alpha
        values = tuple((1.0 - ratio) * ratio**k for k in range(depth + 1))
        return cls(
            values=values,
            remainder=ratio ** (depth + 1),
            K=1.0,
            gamma=alpha - 1.0,
            source="padic",
            prime=p,
            exponent=alpha,
        )

    @classmethod
    def single_term(cls) -> "AlphaTable":
        """α_0 = 1: independent U_g. The tail condition holds for any K, γ; K = γ = 1 is recorded."""
        return cls(values=(1.0,), remainder=0.0, K=1.0, gamma=1.0, source="single_term")

    @classmethod
    def from_coupling(
        cls, spec: CouplingSpec, radix: RadixSequence, gamma: float | None = None
    ) -> "AlphaTable":
        """
        α_k = c_k / λ_0 from a coupling table, the tail beyond the root kept as remainder.

        For 𝔅^α and 𝔇^α on the counting profile γ defaults to α - 1; otherwise it must be
        given. K is fitted on the explicit levels.
        """
        lam0 = eigenvalue(0, spec)
        values = tuple(c / lam0 for c in spec.couplings)
        remainder = spec.tail / lam0
        if gamma is None:
            if spec.kind in ("standard", "custom"):
                raise ValueError(f"γ must be given for a {spec.kind} coupling table")
            gamma = spec.power - 1.0
        if gamma <= 0:
            raise ValueError(f"γ = {gamma} is not positive; the tail condition cannot hold")
        K = fit_K(values, remainder, radix, gamma)
        return cls(values=values, remainder=remainder, K=K, gamma=gamma, source="coupling")

    @classmethod
    def explicit(
        cls, values: Sequence[float], remainder: float, K: float, gamma: float
    ) -> "AlphaTable":
        return cls(values=tuple(values), remainder=remainder, K=K, gamma=gamma)

    @property
    def depth(self) -> int:
        return len(self.values) - 1

    @property
    def alpha0(self) -> float:
        return self.values[0]

    @property
    def degenerate(self) -> bool:
        return self.source == "single_term" or (len(self.values) == 1 and self.remainder == 0.0)

    def alpha(self, k: int) -> float:
        """α_k at any depth for p-adic tables, within the table otherwise."""
        if k < 0:
            raise ValueError(f"index {k} is negative")
        if k <= self.depth:
            return self.values[k]
        if self.source == "padic":
            ratio = float(self.prime) ** -float(self.exponent)  # type: ignore[arg-type]
            return (1.0 - ratio) * ratio**k
        # the remainder of explicit tables is truncated, not spread over levels
        return 0.0

    def tail_from(self, level: int) -> float:
        """Σ_{k≥level} α_k."""
        if level < 0:
            raise ValueError(f"level {level} is negative")
        if self.source == "padic":
            return float(self.prime) ** (-float(self.exponent) * level)  # type: ignore[arg-type]
        if level <= self.depth:
            return math.fsum(self.values[level:]) + self.remainder
        if self.remainder == 0.0:
            return 0.0
        raise FeasibilityError(f"tail from level {level} is beyond the explicit table")

    def a(self, k: int) -> float:
        """a_k = Σ_{i>k} α_i, the half-width of the range of the tail part T_g^k."""
        return self.tail_from(k + 1)

    def envelope(self, radix: RadixSequence, level: int) -> float:
        """K π_ℓ^{-(1+γ)}, computed in log space."""
        return self.K * math.exp(-(1.0 + self.gamma) * radix.log_order(level))

    def check_tail_condition(self, radix: RadixSequence, levels: int | None = None) -> bool:
        """True when Σ_{k≥ℓ} α_k ≤ K π_ℓ^{-(1+γ)} for ℓ = 0..levels (default: table depth)."""
        top = self.depth if levels is None else levels
        for level in range(top + 1):
            tail = self.tail_from(level)
            if tail > self.envelope(radix, level) * (1.0 + 1e-12) + 1e-300:
                LOGGER.debug("tail condition fails at level %d: %g", level, tail)
                return False
        return True

    def required_depth(
        self,
        radix: RadixSequence,
        level: int,
        c: float,
        tolerance: float | None = None,
        max_depth: int | None = None,
    ) -> int:
        """
        Smallest D ≥ ℓ whose omitted mass envelope K π_D^{-(1+γ)} is below
        ``tolerance`` · c / (2 π_ℓ).

        Explicit tables cannot reach past their depth: the truncation then stops at the
        table end when the recorded remainder is already below the threshold.
        """
        tolerance = CFG.truncation_tolerance if tolerance is None else tolerance
        max_depth = CFG.max_depth if max_depth is None else max_depth
        if self.degenerate:
            return level
        if c <= 0:
            raise FeasibilityError("the window scale c must be positive to fix a truncation depth")
        log_threshold = math.log(tolerance * c / 2.0) - radix.log_order(level)
        depth = level
        while math.log(self.K) - (1.0 + self.gamma) * radix.log_order(depth) >= log_threshold:
            depth += 1
            if depth > max_depth:
                raise FeasibilityError(
                    f"no truncation depth up to {max_depth} meets tolerance {tolerance} at level {level}"
                )
        if self.source != "padic" and depth > self.depth:
            if self.remainder < math.exp(log_threshold):
                LOGGER.debug("truncating at table depth %d, remainder %g", self.depth, self.remainder)
                return max(level, self.depth)
            raise FeasibilityError(
                f"level {level} needs depth {depth} but the alpha table stops at {self.depth}"
            )
        LOGGER.debug("truncation depth %d for window level %d", depth, level)
        return depth

    def weights(self, depth: int) -> np.ndarray:
        """α_0..α_depth as an array."""
        return np.array([self.alpha(k) for k in range(depth + 1)])


def fit_K(values: Sequence[float], remainder: float, radix: RadixSequence, gamma: float) -> float:
    """Smallest K with Σ_{k≥ℓ} α_k ≤ K π_ℓ^{-(1+γ)} on the explicit levels."""
    best = 0.0
    for level in range(len(values)):
        tail = math.fsum(values[level:]) + remainder
        best = max(best, tail * math.exp((1.0 + gamma) * radix.log_order(level)))
    return best


class UField(BaseModel):
    """
    One realisation of (U_g) on the window G_ℓ.

    ``shared_tail`` is Σ_{k>ℓ} α_k ε(g_k), identical for every leaf of the window.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    level: int = Field(..., ge=0)
    values: np.ndarray
    shared_tail: float
    depth: int
    seed: int | None = None
    trial: int | None = None


class ConditioningCheck(BaseModel):
    """Both sides of E[f(X+Z) f(Y+Z)] = E[E[f(X+Z) | Z]^2] with standard errors."""

    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    trials: int

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.lhs_stderr, self.rhs_stderr)


class IndicatorSpec(BaseModel):
    """f = 1_{[low, high]}; low > high gives f ≡ 0, infinite ends give f ≡ 1."""

    model_config = ConfigDict(frozen=True)

    low: float
    high: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return ((x >= self.low) & (x <= self.high)).astype(float)


def u_from_epsilons(
    tree: TreeIndex,
    alpha: AlphaTable,
    level: int,
    eps_levels: Sequence[np.ndarray],
    chain: np.ndarray,
) -> tuple[np.ndarray, float | np.ndarray]:
    """
    Assemble U_g from ε values by ancestor traversal.

    Parameters:
        tree (TreeIndex): The truncated tree.
        alpha (AlphaTable): Field weights.
        level (int): Window level ℓ.
        eps_levels (Sequence[np.ndarray]): For j = 0..ℓ, the ε of the π_ℓ/π_j level-j balls
            (a leading batch axis is allowed).
        chain (np.ndarray): ε at levels ℓ+1..D on the shared ancestor chain.

    Returns:
        tuple: (U values, shared tail), batched when the inputs are.
    """
    if len(eps_levels) != level + 1:
        raise ValueError(f"expected ε arrays for levels 0..{level}")
    chain = np.asarray(chain, dtype=float)
    depth = level + chain.shape[-1]
    weights = alpha.weights(depth)
    shared = chain @ weights[level + 1 :] if chain.shape[-1] else np.zeros(chain.shape[:-1])
    first = np.asarray(eps_levels[0], dtype=float)
    values = np.zeros(first.shape, dtype=float)
    for j, eps in enumerate(eps_levels):
        eps = np.asarray(eps, dtype=float)
        values += weights[j] * np.repeat(eps, tree.order(j), axis=-1)
    values += np.asarray(shared)[..., None]
    return values, shared


def _trial_epsilons(
    tree: TreeIndex, noise: NoiseSpec, level: int, depth: int, rng: np.random.Generator
) -> tuple[list[np.ndarray], np.ndarray]:
    """Draw one trial's ε in canonical order: level-0 balls, level 1, ..., then the chain."""
    sizes = [tree.ball_count(j) if j <= level else 1 for j in range(depth + 1)]
    draws: list[np.ndarray] = []
    for family, run in noise.groups(range(depth + 1)):
        block = family.sample(rng, sum(sizes[k] for k in run))
        offsets = np.cumsum([0] + [sizes[k] for k in run])
        draws.extend(block[offsets[i] : offsets[i + 1]] for i in range(len(run)))
    window = draws[: level + 1]
    chain = np.array([draws[k][0] for k in range(level + 1, depth + 1)])
    return window, chain


def _window_tree(tree: TreeIndex, level: int) -> TreeIndex:
    if not 0 <= level <= tree.depth:
        raise TreeIndexError(f"window level {level} outside [0, {tree.depth}]")
    return TreeIndex(radix=tree.radix, depth=level)


def sample_u_field(
    tree: TreeIndex,
    alpha: AlphaTable,
    noise: NoiseSpec,
    level: int,
    seed: int,
    trial: int = 0,
    c: float = 1.0,
    depth: int | None = None,
) -> UField:
    """
    Sample U on the window G_ℓ for one trial.

    The truncation depth D is chosen from the window scale ``c`` unless given; the
    draws depend only on (seed, trial, ℓ).
    """
    window = _window_tree(tree, level)
    depth = alpha.required_depth(tree.radix, level, c) if depth is None else depth
    rng = trial_generator(seed, trial, stream=level)
    eps, chain = _trial_epsilons(window, noise, level, depth, rng)
    values, shared = u_from_epsilons(window, alpha, level, eps, chain)
    return UField(
        level=level,
        values=values,
        shared_tail=float(shared),
        depth=depth,
        seed=seed,
        trial=trial,
    )


def _sample_chunk(
    trials: range,
    tree: TreeIndex,
    alpha: AlphaTable,
    noise: NoiseSpec,
    level: int,
    depth: int,
    seed: int,
) -> np.ndarray:
    rows = []
    for trial in trials:
        rng = trial_generator(seed, trial, stream=level)
        eps, chain = _trial_epsilons(tree, noise, level, depth, rng)
        rows.append((eps, chain))
    eps_levels = [np.stack([row[0][j] for row in rows]) for j in range(level + 1)]
    chains = np.stack([row[1] for row in rows])
    values, _ = u_from_epsilons(tree, alpha, level, eps_levels, chains)
    return values


def sample_u_batch(
    tree: TreeIndex,
    alpha: AlphaTable,
    noise: NoiseSpec,
    level: int,
    seed: int,
    trials: range,
    depth: int,
) -> np.ndarray:
    """U fields of several trials stacked as a (len(trials), π_ℓ) array; row i is trial trials[i]."""
    window = _window_tree(tree, level)
    if len(trials) == 0:
        return np.zeros((0, window.leaf_count))
    return _sample_chunk(trials, window, alpha, noise, level, depth, seed)


def _sample_u0_chunk(
    chunk: tuple[int, int], alpha: AlphaTable, noise: NoiseSpec, depth: int, seed: int
) -> np.ndarray:
    index, size = chunk
    rng = trial_generator(seed, index, stream=DENSITY_STREAM)
    columns = []
    for family, run in noise.groups(range(depth + 1)):
        columns.append(family.sample(rng, (size, len(run))))
    return np.hstack(columns) @ alpha.weights(depth)


def sample_u0(
    alpha: AlphaTable,
    noise: NoiseSpec,
    n: int,
    seed: int,
    depth: int,
    workers: int = 1,
    chunk_size: int | None = None,
) -> np.ndarray:
    """
    n independent copies of U_0 = Σ_{k≤D} α_k ε_k along a single ancestor chain.

    Samples are produced in chunks keyed by chunk index, so the output depends on
    (seed, n, chunk size) but not on the worker count.
    """
    chunk_size = CFG.chunk_size * 64 if chunk_size is None else chunk_size
    chunks = [(i, len(r)) for i, r in enumerate(chunk_ranges(n, chunk_size))]
    worker = partial(_sample_u0_chunk, alpha=alpha, noise=noise, depth=depth, seed=seed)
    parts = ordered_map(worker, chunks, workers=workers, progress=CFG.progress, desc="U_0")
    return np.concatenate(parts) if parts else np.zeros(0)


def perturbed_eigenvalues(u: UField | np.ndarray, lam_h: float) -> np.ndarray:
    """λ_H (1 + U_g) for every leaf of the window."""
    if lam_h <= 0:
        raise ValueError("λ_H must be positive")
    values = u.values if isinstance(u, UField) else np.asarray(u, dtype=float)
    return lam_h * (1.0 + values)


def verify_conditioning_identity(
    indicator: IndicatorSpec,
    x_family: NoiseFamily,
    z_family: NoiseFamily,
    trials: int,
    seed: int,
    stream: int = VERIFY_STREAM,
) -> ConditioningCheck:
    """
    Monte Carlo check of E[f(X+Z) f(Y+Z)] = E[E[f(X+Z) | Z]^2] for X, Y i.i.d.
    and independent of Z.

    The right-hand side integrates X out exactly through its distribution function.
    """
    if trials < 2:
        raise FeasibilityError("at least two trials are needed for a standard error")
    rng = trial_generator(seed, 0, stream=stream)
    x = x_family.sample(rng, trials)
    y = x_family.sample(rng, trials)
    z = z_family.sample(rng, trials)

    lhs_samples = indicator(x + z) * indicator(y + z)
    inner = x_family.interval_probability(indicator.low - z, indicator.high - z)
    rhs_samples = inner**2

    def _stderr(samples: np.ndarray) -> float:
        return float(np.std(samples, ddof=1) / math.sqrt(samples.size))

    return ConditioningCheck(
        lhs=float(lhs_samples.mean()),
        lhs_stderr=_stderr(lhs_samples),
        rhs=float(rhs_samples.mean()),
        rhs_stderr=_stderr(rhs_samples),
        trials=trials,
    )


def conditioning_oracle(
    indicator: IndicatorSpec, x_family: NoiseFamily, z_family: NoiseFamily
) -> float:
    """E[E[f(X+Z) | Z]^2] by deterministic quadrature over the law of Z."""

    def inner_squared(z: float) -> float:
        return float(x_family.interval_probability(indicator.low - z, indicator.high - z)) ** 2

    return z_family.expect(inner_squared)
