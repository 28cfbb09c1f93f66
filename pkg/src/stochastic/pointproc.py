"""
Counting the field in shrinking windows and comparing count laws with Poisson laws.
"""

import logging
import math
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats

from src.load_config import CFG
from src.spectral.tree import TreeIndex
from src.stochastic.perturb import UField

LOGGER = logging.getLogger(__name__)


class Window(BaseModel):
    """
    The closed interval I_ℓ = [t_0 - c/(2π_ℓ), t_0 + c/(2π_ℓ)] at level ℓ.

    Endpoints are included; under an absolutely continuous field they carry no mass.
    """

    model_config = ConfigDict(frozen=True)

    t0: float
    c: float = Field(..., ge=0.0)
    level: int = Field(..., ge=0)
    order: int = Field(..., ge=1)

    @classmethod
    def build(cls, tree: TreeIndex, level: int, t0: float, c: float) -> "Window":
        return cls(t0=t0, c=c, level=level, order=tree.order(level))

    @property
    def half_width(self) -> float:
        return self.c / (2.0 * self.order)

    @property
    def low(self) -> float:
        return self.t0 - self.half_width

    @property
    def high(self) -> float:
        return self.t0 + self.half_width

    @property
    def width(self) -> float:
        return self.c / self.order

    def eigenvalue_interval(self, lam_h: float) -> tuple[float, float]:
        """The paired interval on the eigenvalue scale, image of I_ℓ under t → λ_H (1 + t)."""
        return lam_h * (1.0 + self.low), lam_h * (1.0 + self.high)


class DiscreteLaw(BaseModel):
    """Law on {0, ..., kmax} with the mass beyond kmax recorded as ``tail``."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    probs: np.ndarray
    tail: float = Field(0.0, ge=0.0)

    @field_validator("probs", mode="before")
    @classmethod
    def _as_array(cls, value) -> np.ndarray:
        array = np.asarray(value, dtype=float)
        if array.ndim != 1 or array.size == 0:
            raise ValueError("a discrete law needs a non-empty one-dimensional mass vector")
        if np.any(array < 0):
            raise ValueError("probabilities must be non-negative")
        return array

    @model_validator(mode="after")
    def _check_normalised(self) -> "DiscreteLaw":
        total = math.fsum(self.probs) + self.tail
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"masses sum to {total!r}, not 1")
        return self

    @property
    def kmax(self) -> int:
        return self.probs.size - 1

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def padded(self, kmax: int) -> np.ndarray:
        out = np.zeros(kmax + 1)
        out[: self.probs.size] = self.probs[: kmax + 1]
        return out


class TVEstimate(BaseModel):
    """Empirical total variation with its delta-method standard error."""

    value: float
    stderr: float
    diagnostic: float
    support: int
    trials: int


def count_W(u: UField, w: Window) -> int:
    """W_ℓ = #{g ∈ G_ℓ : U_g ∈ I_ℓ}."""
    if u.level != w.level:
        raise ValueError(f"field level {u.level} differs from window level {w.level}")
    return int(np.count_nonzero((u.values >= w.low) & (u.values <= w.high)))


def count_W_batch(values: np.ndarray, w: Window) -> np.ndarray:
    """W_ℓ for each row of a (trials, π_ℓ) array of field values."""
    if values.shape[-1] != w.order:
        raise ValueError(f"expected {w.order} sites per trial, got {values.shape[-1]}")
    return np.count_nonzero((values >= w.low) & (values <= w.high), axis=-1)


def empirical_law(counts: Sequence[int] | np.ndarray) -> DiscreteLaw:
    """Relative frequencies of the observed counts."""
    counts_arr = np.asarray(counts, dtype=np.int64)
    if counts_arr.size == 0:
        raise ValueError("no trials to estimate a law from")
    if np.any(counts_arr < 0):
        raise ValueError("counts must be non-negative")
    freq = np.bincount(counts_arr) / counts_arr.size
    return DiscreteLaw(probs=freq, tail=0.0)


def poisson_kmax(lam: float, tail: float | None = None) -> int:
    """Quantile of Poi(λ) at 1 - ``tail``."""
    tail = CFG.kmax_tail if tail is None else tail
    if lam == 0:
        return 0
    return int(stats.poisson.isf(tail, lam))


def poisson_law(lam: float, kmax: int | None = None) -> DiscreteLaw:
    """
    Poi(λ) on {0, ..., kmax}, masses from the log-pmf and the tail from the survival function.

    Parameters:
        lam (float): Mean λ ≥ 0.
        kmax (int | None): Largest explicit value; defaults to the 1 - 1e-10 quantile.
    """
    if lam < 0 or not math.isfinite(lam):
        raise ValueError(f"Poisson mean must be finite and non-negative, got {lam}")
    kmax = poisson_kmax(lam) if kmax is None else kmax
    if lam == 0:
        probs = np.zeros(kmax + 1)
        probs[0] = 1.0
        return DiscreteLaw(probs=probs, tail=0.0)
    k = np.arange(kmax + 1)
    probs = np.exp(stats.poisson.logpmf(k, lam))
    tail = float(stats.poisson.sf(kmax, lam))
    return DiscreteLaw(probs=probs, tail=tail)


def _trimmed(law: DiscreteLaw, kmax: int) -> tuple[np.ndarray, float]:
    """Masses on {0, ..., kmax} and everything above folded into the tail."""
    probs = law.padded(kmax)
    return probs, law.tail + math.fsum(law.probs[kmax + 1 :])


def _shared_support(law_a: DiscreteLaw, law_b: DiscreteLaw) -> tuple[float, float, float]:
    """
    (½ L1 distance on the common support, tail_a, tail_b).

    A law with a positive tail is only resolved up to its kmax, so both laws are cut there.
    """
    open_ends = [law.kmax for law in (law_a, law_b) if law.tail > 0]
    kmax = min(open_ends) if open_ends else max(law_a.kmax, law_b.kmax)
    a, tail_a = _trimmed(law_a, kmax)
    b, tail_b = _trimmed(law_b, kmax)
    return 0.5 * float(np.abs(a - b).sum()), tail_a, tail_b


def tv(law_a: DiscreteLaw, law_b: DiscreteLaw) -> float:
    """½ Σ_k |a_k - b_k| + ½ |tail_a - tail_b| over the support both laws resolve."""
    core, tail_a, tail_b = _shared_support(law_a, law_b)
    return min(1.0, core + 0.5 * abs(tail_a - tail_b))


def tv_interval(law_a: DiscreteLaw, law_b: DiscreteLaw) -> tuple[float, float]:
    """Rigorous bracket of the total variation when the tails are not resolved."""
    core, tail_a, tail_b = _shared_support(law_a, law_b)
    lower = core + 0.5 * abs(tail_a - tail_b)
    upper = core + 0.5 * (tail_a + tail_b)
    return min(1.0, lower), min(1.0, upper)


def tv_estimate(counts: Sequence[int] | np.ndarray, target: DiscreteLaw) -> TVEstimate:
    """
    TV between the empirical law of ``counts`` and ``target``.

    The standard error is the delta-method value ½ sqrt(Var(s_K)/N) with
    s_k = sign(p̂_k - q_k); ``diagnostic`` is the cruder sqrt(S/N)/2 with S the support size.
    """
    empirical = empirical_law(counts)
    n = int(np.asarray(counts).size)
    value = tv(empirical, target)

    kmax = max(empirical.kmax, target.kmax)
    p_hat = empirical.padded(kmax)
    q = target.padded(kmax)
    signs = np.sign(p_hat - q)
    mean_sign = float(np.dot(signs, p_hat))
    var_sign = max(0.0, float(np.dot(signs**2, p_hat)) - mean_sign**2)
    stderr = 0.5 * math.sqrt(var_sign / n)

    support = int(np.count_nonzero((p_hat > 0) | (q > 0)))
    return TVEstimate(
        value=value,
        stderr=stderr,
        diagnostic=0.5 * math.sqrt(support / n),
        support=support,
        trials=n,
    )


def tv_poisson_triangle(lam_ell: float, lam: float, primary_bound: float) -> float:
    """primary_bound + TV(Poi(λ(ℓ)), Poi(λ)), the second term summed as a series."""
    if lam_ell < 0 or lam < 0:
        raise ValueError("Poisson means must be non-negative")
    if lam_ell == lam:
        return primary_bound
    kmax = max(poisson_kmax(lam_ell, 1e-16), poisson_kmax(lam, 1e-16))
    return primary_bound + tv(poisson_law(lam_ell, kmax), poisson_law(lam, kmax))


def iid_envelope(lam: float, order: int) -> float:
    """min(λ, λ²)/(2π_ℓ): the Poisson error of π_ℓ independent indicators with mean λ/π_ℓ."""
    return min(lam, lam**2) / (2.0 * order)
