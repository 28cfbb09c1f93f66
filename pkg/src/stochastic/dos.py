"""
Density of states of the perturbed spectrum.

The field value U = Σ_k α_k ε_k has characteristic function φ(s) = Π_k φ_k(α_k s), and
its density and the window intensity follow by Fourier inversion,

    η(t)  = (1/π) ∫_0^∞ Re(φ(s) e^{-ist}) ds,
    λ(ℓ)  = (c/π) ∫_0^∞ Re(φ(s) e^{-ist_0}) sin(sh)/(sh) ds,   h = c/(2π_ℓ).

Integrals are cut at S, integrated with composite Simpson and refined by step halving.
The part beyond S is bounded by the decay of the continuous factors,
|φ_k(x)| ≤ min(1, b_k/|x|), and reported as error.
"""

import logging
import math
from collections.abc import Callable, Sequence
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, special

from src.load_config import CFG
from src.stochastic.noise import NoiseSpec, UniformNoise
from src.stochastic.perturb import AlphaTable
from src.utils.errors import FeasibilityError

LOGGER = logging.getLogger(__name__)

INITIAL_CUTOFF = 32.0
CORRECTED_CUTOFF = 128.0 * math.pi


class QuadratureSettings(BaseModel):
    """Numerical knobs of the inversion; defaults come from ``configs/config.yml``."""

    model_config = ConfigDict(frozen=True)

    points_per_period: int = Field(default_factory=lambda: CFG.points_per_period, ge=4)
    max_halvings: int = Field(default_factory=lambda: CFG.max_halvings, ge=1)
    convergence_tol: float = Field(default_factory=lambda: CFG.convergence_tol, gt=0.0)
    tail_tol: float = Field(default_factory=lambda: CFG.tail_tol, gt=0.0)
    max_cutoff: float = Field(default_factory=lambda: CFG.max_cutoff, gt=0.0)
    max_product_depth: int = Field(default_factory=lambda: CFG.max_product_depth, ge=0)


class CharFnSpec(BaseModel):
    """φ(s) = Π_{k≤depth} φ_{ε,k}(α_k s), the truncated characteristic function of U."""

    model_config = ConfigDict(frozen=True)

    alpha: AlphaTable
    noise: NoiseSpec
    depth: int = Field(..., ge=0)

    @classmethod
    def build(cls, alpha: AlphaTable, noise: NoiseSpec, quad: QuadratureSettings | None = None):
        """
        Pick the product depth so that the omitted factors move φ by at most
        a_D |s| and the accumulated effect over the largest cutoff stays below ``tail_tol``.
        """
        quad = quad or QuadratureSettings()
        if alpha.source != "padic":
            return cls(alpha=alpha, noise=noise, depth=alpha.depth)
        depth = 0
        while alpha.a(depth) * quad.max_cutoff**2 / 2.0 > quad.tail_tol:
            depth += 1
            if depth >= quad.max_product_depth:
                LOGGER.warning("product depth capped at %d", depth)
                break
        LOGGER.debug("characteristic function product depth %d", depth)
        return cls(alpha=alpha, noise=noise, depth=depth)

    @property
    def weights(self) -> np.ndarray:
        return self.alpha.weights(self.depth)

    @property
    def omega(self) -> float:
        """Σ α_k, the half-width of the support of U."""
        return float(self.weights.sum())

    def decay_factors(self) -> list[tuple[float, float]]:
        """(b_k, α_k) of the absolutely continuous levels."""
        factors = []
        for k, a_k in enumerate(self.weights):
            b = self.noise.family(k).decay_coefficient
            if a_k > 0 and b is not None:
                factors.append((b, float(a_k)))
        return factors

    @property
    def single_uniform(self) -> bool:
        """One uniform factor only: φ(s) = sin(s)/s, integrable only conditionally."""
        return self.alpha.degenerate and isinstance(self.noise.base, UniformNoise)


class DensityEstimate(BaseModel):
    """η at one abscissa, with the method used and its error indicator."""

    t: float
    value: float
    method: Literal["quadrature", "histogram"]
    error: float
    flag: str | None = None


class QuadratureResult(BaseModel):
    value: float
    error: float
    cutoff: float
    halvings: int
    flag: str | None = None


class DensityHistogram(BaseModel):
    """Histogram density with per-bin standard errors; one bin is centred on ``center``."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    centers: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    width: float
    samples: int

    def at(self, t: float) -> DensityEstimate:
        index = int(np.argmin(np.abs(self.centers - t)))
        if abs(self.centers[index] - t) > self.width / 2.0 + 1e-12:
            raise ValueError(f"{t} lies outside the histogram range")
        return DensityEstimate(
            t=t,
            value=float(self.values[index]),
            method="histogram",
            error=float(self.errors[index]),
        )


def phi(t: np.ndarray | float, spec: CharFnSpec) -> np.ndarray:
    """
    Truncated product Π_k φ_{ε,k}(α_k t), complex valued; φ(0) = 1.

    Parameters:
        t (np.ndarray | float): Frequencies.
        spec (CharFnSpec): Table, noise and product depth.

    Returns:
        np.ndarray: φ(t) with the shape of ``t``.
    """
    t_arr = np.asarray(t, dtype=float)
    result = np.ones(t_arr.shape, dtype=complex)
    for k, a_k in enumerate(spec.weights):
        if a_k == 0.0:
            continue
        result *= spec.noise.family(k).char_fn(a_k * t_arr)
    return result


def tail_envelope(factors: Sequence[tuple[float, float]], cutoff: float) -> float:
    """
    Bound on ∫_S^∞ |Π_k φ_k(α_k s)| ds from any m ≥ 2 factors:
    (Π_{k<m} b_k/α_k) S^{1-m}/(m-1), minimised over m with factors ordered by b_k/α_k.
    """
    ratios = sorted(b / a for b, a in factors)
    best = math.inf
    log_coef = 0.0
    for m, ratio in enumerate(ratios, start=1):
        log_coef += math.log(ratio)
        if m >= 2:
            best = min(best, math.exp(log_coef - (m - 1) * math.log(cutoff) - math.log(m - 1)))
    return best


def choose_cutoff(
    factors: Sequence[tuple[float, float]], scale: float, quad: QuadratureSettings
) -> tuple[float, float]:
    """Double the cutoff until the scaled tail envelope meets ``tail_tol``; return (S, envelope)."""
    if len(factors) < 2:
        raise FeasibilityError(
            "the characteristic function is not absolutely integrable: "
            "fewer than two absolutely continuous factors"
        )
    cutoff = INITIAL_CUTOFF
    envelope = scale * tail_envelope(factors, cutoff)
    while envelope > quad.tail_tol and cutoff < quad.max_cutoff:
        cutoff = min(2.0 * cutoff, quad.max_cutoff)
        envelope = scale * tail_envelope(factors, cutoff)
    if envelope > quad.tail_tol:
        LOGGER.warning(
            "cutoff capped at %g with tail envelope %.3g above %.3g",
            cutoff,
            envelope,
            quad.tail_tol,
        )
    LOGGER.debug("quadrature cutoff %g, tail envelope %.3g", cutoff, envelope)
    return cutoff, envelope


def _inversion(
    spec: CharFnSpec,
    abscissae: Sequence[float],
    kernel: Callable[[np.ndarray], np.ndarray],
    scale: float,
    cutoff: float,
    omega: float,
    quad: QuadratureSettings,
) -> tuple[np.ndarray, np.ndarray, int]:
    """scale · ∫_0^S Re(φ(s) kernel(s) e^{-ist}) ds for each t, Simpson with step halving."""
    t_values = np.asarray(abscissae, dtype=float)
    step = 2.0 * math.pi / (quad.points_per_period * omega)
    n = max(2, math.ceil(cutoff / step))
    n += n % 2

    previous: np.ndarray | None = None
    change = np.full(t_values.shape, math.inf)
    halvings = 0
    for halvings in range(quad.max_halvings + 1):
        s = np.linspace(0.0, cutoff, n + 1)
        base = phi(s, spec) * kernel(s)
        current = np.array(
            [scale * integrate.simpson((base * np.exp(-1j * s * t)).real, x=s) for t in t_values]
        )
        if previous is not None:
            change = np.abs(current - previous)
            if float(change.max()) < quad.convergence_tol:
                break
        previous = current
        n *= 2
    else:
        LOGGER.warning("step halving stopped after %d refinements", quad.max_halvings)
    # Richardson estimate for Simpson's fourth-order rule
    return current, change / 15.0, halvings


def _sine_tail(freq: np.ndarray, cutoff: float) -> np.ndarray:
    """∫_S^∞ sin(a s)/s ds."""
    si, _ = special.sici(np.abs(freq) * cutoff)
    return np.sign(freq) * (math.pi / 2.0 - si)


def _cosine_tail(freq: np.ndarray, cutoff: float) -> np.ndarray:
    """∫_S^∞ cos(a s)/s² ds."""
    a = np.abs(freq)
    si, _ = special.sici(a * cutoff)
    return np.cos(a * cutoff) / cutoff - a * (math.pi / 2.0 - si)


def eta_grid(
    abscissae: Sequence[float], spec: CharFnSpec, quad: QuadratureSettings | None = None
) -> list[DensityEstimate]:
    """η(t) for many abscissae sharing one evaluation of φ per refinement."""
    quad = quad or QuadratureSettings()
    t_values = np.asarray(abscissae, dtype=float)
    omega = spec.omega + float(np.max(np.abs(t_values), initial=0.0))

    if spec.single_uniform:
        a0 = spec.alpha.alpha0
        cutoff = CORRECTED_CUTOFF / a0
        values, errors, _ = _inversion(
            spec, t_values, np.ones_like, 1.0 / math.pi, cutoff, omega, quad
        )
        tails = (_sine_tail(a0 + t_values, cutoff) + _sine_tail(a0 - t_values, cutoff)) / (
            2.0 * a0 * math.pi
        )
        return [
            DensityEstimate(
                t=float(t), value=float(v), method="quadrature", error=float(e), flag="corrected"
            )
            for t, v, e in zip(t_values, values + tails, errors, strict=True)
        ]

    scale = 1.0 / math.pi
    cutoff, envelope = choose_cutoff(spec.decay_factors(), scale, quad)
    values, errors, _ = _inversion(spec, t_values, np.ones_like, scale, cutoff, omega, quad)
    flag = None if envelope <= quad.tail_tol else "cutoff_capped"
    return [
        DensityEstimate(
            t=float(t), value=float(v), method="quadrature", error=float(e) + envelope, flag=flag
        )
        for t, v, e in zip(t_values, values, errors, strict=True)
    ]


def eta_at(t0: float, spec: CharFnSpec, quad: QuadratureSettings | None = None) -> DensityEstimate:
    """η(t_0) by Fourier inversion."""
    return eta_grid([t0], spec, quad)[0]


def lambda_ell_quadrature(
    order: int, spec: CharFnSpec, c: float, t0: float, quad: QuadratureSettings | None = None
) -> QuadratureResult:
    """
    λ(ℓ) = π_ℓ P{U ∈ I_ℓ} through the smoothed inversion kernel sin(sh)/(sh).

    Parameters:
        order (int): π_ℓ of the window level.
        spec (CharFnSpec): Characteristic function of U.
        c (float): Window scale, |I_ℓ| = c/π_ℓ.
        t0 (float): Window centre.
    """
    quad = quad or QuadratureSettings()
    if c < 0:
        raise ValueError("the window scale c must be non-negative")
    if c == 0:
        return QuadratureResult(value=0.0, error=0.0, cutoff=0.0, halvings=0)
    h = c / (2.0 * order)
    omega = spec.omega + h + abs(t0)
    scale = c / math.pi

    def kernel(s: np.ndarray) -> np.ndarray:
        return np.sinc(s * h / math.pi)

    if spec.single_uniform:
        a0 = spec.alpha.alpha0
        cutoff = CORRECTED_CUTOFF / a0
        values, errors, halvings = _inversion(spec, [t0], kernel, scale, cutoff, omega, quad)
        freqs = np.array([a0 - h - t0, a0 - h + t0, a0 + h - t0, a0 + h + t0])
        parts = _cosine_tail(freqs, cutoff)
        tail = scale / (a0 * h) * 0.25 * float(parts[0] + parts[1] - parts[2] - parts[3])
        return QuadratureResult(
            value=float(values[0] + tail),
            error=float(errors[0]),
            cutoff=cutoff,
            halvings=halvings,
            flag="corrected",
        )

    factors = [*spec.decay_factors(), (1.0, h)]
    cutoff, envelope = choose_cutoff(factors, scale, quad)
    values, errors, halvings = _inversion(spec, [t0], kernel, scale, cutoff, omega, quad)
    return QuadratureResult(
        value=float(values[0]),
        error=float(errors[0]) + envelope,
        cutoff=cutoff,
        halvings=halvings,
        flag=None if envelope <= quad.tail_tol else "cutoff_capped",
    )


def empirical_density(
    samples: np.ndarray,
    center: float = 0.0,
    width: float | None = None,
    support: tuple[float, float] = (-1.0, 1.0),
    min_samples: int | None = None,
) -> DensityHistogram:
    """
    Histogram density of U samples with an odd number of bins, one centred on ``center``.

    The default bin width is 2 N^{-1/3} times the configured scale; per-bin errors are
    sqrt(p(1 - p)/N)/width.
    """
    min_samples = CFG.min_samples if min_samples is None else min_samples
    data = np.asarray(samples, dtype=float)
    n = data.size
    if n < min_samples:
        raise FeasibilityError(f"{n} samples are fewer than the required {min_samples}")
    width = 2.0 * n ** (-1.0 / 3.0) * CFG.bin_width_scale if width is None else width
    reach = max(center - support[0], support[1] - center)
    half_bins = math.ceil(reach / width - 0.5)
    offsets = np.arange(-half_bins, half_bins + 2) - 0.5
    edges = center + width * offsets
    counts, _ = np.histogram(data, bins=edges)
    p = counts / n
    return DensityHistogram(
        centers=center + width * np.arange(-half_bins, half_bins + 1),
        values=p / width,
        errors=np.sqrt(p * (1.0 - p) / n) / width,
        width=width,
        samples=n,
    )


def eigenvalue_scale_density(estimate: DensityEstimate, lam_h: float) -> DensityEstimate:
    """
    The density of λ_H (1 + U) at τ = λ_H (1 + t): η(t)/λ_H.

    The integrated density of states and the law of U are related by this affine change
    of variables.
    """
    if lam_h <= 0:
        raise ValueError("λ_H must be positive")
    return estimate.model_copy(
        update={
            "t": lam_h * (1.0 + estimate.t),
            "value": estimate.value / lam_h,
            "error": estimate.error / lam_h,
        }
    )
