"""
Distributions of the coupling perturbations ε(B).

Every family lives on (-1, 1). Level 0 must be absolutely continuous with a bounded
density; the higher levels may use any family, including the two-point law. No symmetry
is assumed anywhere.
"""

from abc import abstractmethod
from collections.abc import Callable
from functools import lru_cache
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, special, stats

# Gauss-Jacobi node counts for the characteristic function of asymmetric Beta laws
MIN_JACOBI_NODES = 256
MAX_JACOBI_NODES = 8192


class NoiseFamily(BaseModel):
    """Common interface of the ε families."""

    model_config = ConfigDict(frozen=True)

    @property
    @abstractmethod
    def absolutely_continuous(self) -> bool: ...

    @property
    @abstractmethod
    def symmetric(self) -> bool: ...

    @property
    def density_sup(self) -> float | None:
        """‖η_ε‖, the sup-norm of the density; None for laws without a density."""
        return None

    @property
    def decay_coefficient(self) -> float | None:
        """
        b with |φ(x)| ≤ min(1, b/|x|).

        For a unimodal density of bounded variation b is the total variation of the
        density, i.e. twice its maximum. None when φ does not decay.
        """
        sup = self.density_sup
        return None if sup is None else 2.0 * sup

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray: ...

    @abstractmethod
    def cdf(self, x: np.ndarray | float) -> np.ndarray: ...

    @abstractmethod
    def char_fn(self, t: np.ndarray | float) -> np.ndarray:
        """E exp(i t ε) as a complex array."""

    @abstractmethod
    def expect(self, func: Callable[[float], float]) -> float:
        """E func(ε) by quadrature against the law."""

    def interval_probability(self, low: np.ndarray | float, high: np.ndarray | float) -> np.ndarray:
        """P(low ≤ ε ≤ high), zero for empty intervals."""
        low_arr = np.asarray(low, dtype=float)
        high_arr = np.asarray(high, dtype=float)
        return np.where(high_arr >= low_arr, self.cdf(high_arr) - self.cdf(low_arr), 0.0)


class UniformNoise(NoiseFamily):
    """Uniform(-1, 1); ‖η_ε‖ = 1/2 and φ(t) = sin(t)/t."""

    kind: Literal["uniform"] = "uniform"

    @property
    def absolutely_continuous(self) -> bool:
        return True

    @property
    def symmetric(self) -> bool:
        return True

    @property
    def density_sup(self) -> float | None:
        return 0.5

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size)

    def cdf(self, x: np.ndarray | float) -> np.ndarray:
        return np.clip((np.asarray(x, dtype=float) + 1.0) / 2.0, 0.0, 1.0)

    def char_fn(self, t: np.ndarray | float) -> np.ndarray:
        # np.sinc(x) = sin(πx)/(πx), with the value 1 at 0
        return np.sinc(np.asarray(t, dtype=float) / np.pi).astype(complex)

    def expect(self, func: Callable[[float], float]) -> float:
        value, _ = integrate.quad(lambda x: 0.5 * func(x), -1.0, 1.0, limit=200)
        return float(value)


class BetaNoise(NoiseFamily):
    """
    Beta(a, b) mapped affinely onto (-1, 1); a, b ≥ 1 keep the density bounded.

    Symmetric laws (a = b) use the Bessel closed form of φ; asymmetric laws use
    Gauss-Jacobi quadrature with enough nodes for the requested frequencies.
    """

    kind: Literal["beta"] = "beta"
    a: float = Field(..., ge=1.0)
    b: float = Field(..., ge=1.0)

    @property
    def _law(self):
        return stats.beta(self.a, self.b, loc=-1.0, scale=2.0)

    @property
    def absolutely_continuous(self) -> bool:
        return True

    @property
    def symmetric(self) -> bool:
        return self.a == self.b

    @property
    def density_sup(self) -> float | None:
        if self.a + self.b <= 2.0:
            return 0.5
        mode = 2.0 * (self.a - 1.0) / (self.a + self.b - 2.0) - 1.0
        return float(self._law.pdf(mode))

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        return 2.0 * rng.beta(self.a, self.b, size) - 1.0

    def cdf(self, x: np.ndarray | float) -> np.ndarray:
        return np.asarray(self._law.cdf(x), dtype=float)

    def char_fn(self, t: np.ndarray | float) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        if self.symmetric:
            nu = self.a - 0.5
            safe = np.where(t_arr == 0.0, 1.0, np.abs(t_arr))
            values = special.gamma(nu + 1.0) * (2.0 / safe) ** nu * special.jv(nu, safe)
            return np.where(t_arr == 0.0, 1.0, values).astype(complex)
        reach = float(np.max(np.abs(t_arr))) if t_arr.size else 0.0
        nodes = int(min(MAX_JACOBI_NODES, max(MIN_JACOBI_NODES, 2 * reach + 64)))
        x, w = _jacobi_rule(nodes, self.b - 1.0, self.a - 1.0)
        phase = np.exp(1j * np.multiply.outer(t_arr, x))
        return phase @ w

    def expect(self, func: Callable[[float], float]) -> float:
        law = self._law
        value, _ = integrate.quad(lambda x: law.pdf(x) * func(x), -1.0, 1.0, limit=200)
        return float(value)


class TwoPointNoise(NoiseFamily):
    """ε = +amplitude with probability ``prob``, -amplitude otherwise. Levels k ≥ 1 only."""

    kind: Literal["two_point"] = "two_point"
    amplitude: float = Field(..., gt=0.0, lt=1.0)
    prob: float = Field(0.5, gt=0.0, lt=1.0)

    @property
    def absolutely_continuous(self) -> bool:
        return False

    @property
    def symmetric(self) -> bool:
        return self.prob == 0.5

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        signs = np.where(rng.random(size) < self.prob, 1.0, -1.0)
        return self.amplitude * signs

    def cdf(self, x: np.ndarray | float) -> np.ndarray:
        x_arr = np.asarray(x, dtype=float)
        return np.where(
            x_arr < -self.amplitude, 0.0, np.where(x_arr < self.amplitude, 1.0 - self.prob, 1.0)
        )

    def interval_probability(self, low: np.ndarray | float, high: np.ndarray | float) -> np.ndarray:
        low_arr = np.asarray(low, dtype=float)
        high_arr = np.asarray(high, dtype=float)
        up = (low_arr <= self.amplitude) & (self.amplitude <= high_arr)
        down = (low_arr <= -self.amplitude) & (-self.amplitude <= high_arr)
        return self.prob * up + (1.0 - self.prob) * down

    def char_fn(self, t: np.ndarray | float) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        return self.prob * np.exp(1j * self.amplitude * t_arr) + (1.0 - self.prob) * np.exp(
            -1j * self.amplitude * t_arr
        )

    def expect(self, func: Callable[[float], float]) -> float:
        return self.prob * func(self.amplitude) + (1.0 - self.prob) * func(-self.amplitude)


NoiseFamilyType = Annotated[
    Union[UniformNoise, BetaNoise, TwoPointNoise], Field(discriminator="kind")
]


class NoiseSpec(BaseModel):
    """
    Per-level ε families: ``base`` at level 0, ``upper`` at every level k ≥ 1 unless
    ``overrides`` names the level explicitly.
    """

    model_config = ConfigDict(frozen=True)

    base: NoiseFamilyType = UniformNoise()
    upper: NoiseFamilyType | None = None
    overrides: dict[int, NoiseFamilyType] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_level_zero(self) -> "NoiseSpec":
        if not self.base.absolutely_continuous:
            raise ValueError("the level-0 family must be absolutely continuous")
        if 0 in self.overrides:
            raise ValueError("level 0 is set through `base`, not `overrides`")
        if any(k < 0 for k in self.overrides):
            raise ValueError("override levels must be positive")
        return self

    @classmethod
    def uniform(cls) -> "NoiseSpec":
        return cls()

    def family(self, k: int) -> NoiseFamily:
        if k < 0:
            raise ValueError(f"level {k} is negative")
        if k == 0:
            return self.base
        if k in self.overrides:
            return self.overrides[k]
        return self.upper if self.upper is not None else self.base

    @property
    def density_sup(self) -> float:
        sup = self.base.density_sup
        assert sup is not None
        return sup

    @property
    def symmetric(self) -> bool:
        families = [self.base, *self.overrides.values()]
        if self.upper is not None:
            families.append(self.upper)
        return all(f.symmetric for f in families)

    def groups(self, levels: range) -> list[tuple[NoiseFamily, range]]:
        """Split ``levels`` into maximal runs of consecutive levels sharing one family."""
        runs: list[tuple[NoiseFamily, range]] = []
        start = levels.start
        for k in levels:
            if k + 1 == levels.stop or self.family(k + 1) != self.family(k):
                runs.append((self.family(k), range(start, k + 1)))
                start = k + 1
        return runs


@lru_cache(maxsize=32)
def _jacobi_rule(nodes: int, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Normalised Gauss-Jacobi rule for the weight (1 - x)^alpha (1 + x)^beta."""
    x, w = special.roots_jacobi(nodes, alpha, beta)
    return x, w / w.sum()
