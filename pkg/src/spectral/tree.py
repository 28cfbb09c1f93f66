"""
Finite truncations of the group G = ⊕_{k≥1} Z(n_k) and its tree of balls.

Group elements of the truncated group G_L are encoded in mixed radix,
g = Σ x_k π_{k-1} with 0 ≤ x_k < n_k, so the level-j ball containing g is
simply ``g // π_j``. Levels follow the finite-subgroup convention: level 0
balls are singletons, level L is the root ball G_L, and increasing the level
moves towards the boundary point of the tree.
"""

from functools import cached_property
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.utils.errors import TreeIndexError


class RadixContinuation(BaseModel):
    """
    Rule producing n_j for levels beyond the explicit radix list.

    - ``cyclic``: repeat the explicit list periodically (bounded radices).
    - ``constant``: n_j = ``value``.
    - ``linear``: n_j = ``slope`` * j + ``intercept`` (unbounded when slope > 0).
    """

    model_config = ConfigDict(frozen=True)

    rule: Literal["cyclic", "constant", "linear"] = "cyclic"
    value: int | None = Field(None, ge=2)
    slope: int = Field(1, ge=0)
    intercept: int = 1

    @model_validator(mode="after")
    def _check_rule(self) -> "RadixContinuation":
        if self.rule == "constant" and self.value is None:
            raise ValueError("constant continuation needs a value")
        return self


class RadixSequence(BaseModel):
    """
    The orders n_1, n_2, ... of the cyclic factors of G.

    ``radices`` lists n_1..n_L explicitly; later radices come from ``continuation``
    and are used only for tail formulas (truncation depths, sequence statistics).
    """

    model_config = ConfigDict(frozen=True)

    radices: tuple[int, ...]
    continuation: RadixContinuation = RadixContinuation()

    @field_validator("radices")
    @classmethod
    def _check_radices(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if not value:
            raise ValueError("at least one radix is required")
        if any(n < 2 for n in value):
            raise ValueError("every radix n_j must be at least 2")
        return value

    @model_validator(mode="after")
    def _check_linear(self) -> "RadixSequence":
        if self.continuation.rule == "linear":
            first = self.continuation.slope * (len(self.radices) + 1) + self.continuation.intercept
            if first < 2:
                raise ValueError("linear continuation must produce radices of at least 2")
        return self

    @classmethod
    def constant(cls, p: int, depth: int) -> "RadixSequence":
        return cls(radices=(p,) * depth, continuation=RadixContinuation(rule="constant", value=p))

    @classmethod
    def linear(cls, slope: int, intercept: int, depth: int) -> "RadixSequence":
        """n_j = slope * j + intercept for every j ≥ 1."""
        radices = tuple(slope * j + intercept for j in range(1, depth + 1))
        return cls(
            radices=radices,
            continuation=RadixContinuation(rule="linear", slope=slope, intercept=intercept),
        )

    @property
    def depth(self) -> int:
        return len(self.radices)

    def radix(self, j: int) -> int:
        """n_j for any j ≥ 0, with the convention n_0 = 1."""
        if j < 0:
            raise TreeIndexError(f"radix index {j} is negative")
        if j == 0:
            return 1
        if j <= self.depth:
            return self.radices[j - 1]
        rule = self.continuation
        if rule.rule == "constant":
            assert rule.value is not None
            return rule.value
        if rule.rule == "linear":
            return rule.slope * j + rule.intercept
        return self.radices[(j - 1) % self.depth]

    @property
    def bounded(self) -> bool:
        """True when M = sup n_j is finite."""
        rule = self.continuation
        return not (rule.rule == "linear" and rule.slope > 0)

    @property
    def inf_radix(self) -> int:
        """m = inf_{j≥1} n_j."""
        rule = self.continuation
        if rule.rule == "constant":
            assert rule.value is not None
            return min(min(self.radices), rule.value)
        if rule.rule == "linear":
            return min(min(self.radices), self.radix(self.depth + 1))
        return min(self.radices)

    @property
    def sup_radix(self) -> int | None:
        """M = sup_{j≥1} n_j, or None when unbounded."""
        rule = self.continuation
        if not self.bounded:
            return None
        if rule.rule == "constant":
            assert rule.value is not None
            return max(max(self.radices), rule.value)
        if rule.rule == "linear":
            return max(max(self.radices), self.radix(self.depth + 1))
        return max(self.radices)

    def order(self, j: int) -> int:
        """π_j = n_1 ... n_j for any j ≥ 0, exact."""
        if j < 0:
            raise TreeIndexError(f"level {j} is negative")
        result = 1
        for i in range(1, j + 1):
            result *= self.radix(i)
        return result

    def log_order(self, j: int) -> float:
        """log π_j, safe for products far beyond float range."""
        return float(sum(np.log(self.radix(i)) for i in range(1, j + 1)))


class BallAddress(BaseModel):
    """Ball at ``level`` whose leaves are ``[index * π_level, (index + 1) * π_level)``."""

    model_config = ConfigDict(frozen=True)

    level: int = Field(..., ge=0)
    index: int = Field(..., ge=0)


class TreeIndex(BaseModel):
    """
    The truncated tree of depth L built on a radix sequence.

    Parameters:
        radix (RadixSequence): Radix sequence, explicit up to at least one level.
        depth (int | None): Truncation depth L; defaults to the explicit list length.
    """

    model_config = ConfigDict(frozen=True)

    radix: RadixSequence
    depth: int = Field(..., ge=0)

    @model_validator(mode="before")
    @classmethod
    def _default_depth(cls, data):
        if isinstance(data, dict) and data.get("depth") is None:
            radix = data.get("radix")
            if isinstance(radix, RadixSequence):
                data = {**data, "depth": radix.depth}
            elif isinstance(radix, dict):
                data = {**data, "depth": len(radix.get("radices", ()))}
        return data

    @classmethod
    def constant(cls, p: int, depth: int) -> "TreeIndex":
        return cls(radix=RadixSequence.constant(p, depth), depth=depth)

    @classmethod
    def from_radices(cls, *radices: int) -> "TreeIndex":
        return cls(radix=RadixSequence(radices=tuple(radices)), depth=len(radices))

    @cached_property
    def orders(self) -> tuple[int, ...]:
        values = [1]
        for j in range(1, self.depth + 1):
            values.append(values[-1] * self.radix.radix(j))
        return tuple(values)

    @property
    def leaf_count(self) -> int:
        return self.orders[-1]

    def radix_at(self, j: int) -> int:
        """n_j of the truncated tree (1 ≤ j ≤ L)."""
        self._check_level(j)
        return self.radix.radix(j)

    def order(self, j: int) -> int:
        """
        π_j, the number of leaves in a level-j ball.

        Parameters:
            j (int): Level with 0 ≤ j ≤ L.

        Returns:
            int: n_1 ... n_j as an exact integer.
        """
        self._check_level(j)
        return self.orders[j]

    def extended_order(self, j: int) -> int:
        """π_j for levels beyond the truncation, through the continuation rule."""
        if 0 <= j <= self.depth:
            return self.orders[j]
        return self.radix.order(j)

    def ancestors(self, g: int) -> list[BallAddress]:
        """The geodesic from leaf ``g`` to the root: entry j is the level-j ball of ``g``."""
        self._check_leaf(g)
        return [BallAddress(level=j, index=g // pi) for j, pi in enumerate(self.orders)]

    def split_level(self, g: int, h: int) -> int:
        """Smallest level at which ``g`` and ``h`` share a ball; 0 iff g == h."""
        self._check_leaf(g)
        self._check_leaf(h)
        for j, pi in enumerate(self.orders):
            if g // pi == h // pi:
                return j
        raise AssertionError("leaves of one tree always meet at the root")

    def members(self, ball: BallAddress) -> range:
        """Leaves contained in ``ball``."""
        self._check_level(ball.level)
        pi = self.orders[ball.level]
        if ball.index >= self.leaf_count // pi:
            raise TreeIndexError(f"ball index {ball.index} out of range at level {ball.level}")
        return range(ball.index * pi, (ball.index + 1) * pi)

    def ball_count(self, j: int) -> int:
        """Number of level-j balls, π_L / π_j."""
        return self.leaf_count // self.order(j)

    def balls(self, j: int) -> list[BallAddress]:
        return [BallAddress(level=j, index=i) for i in range(self.ball_count(j))]

    def ball_of_leaves(self, j: int, window_level: int | None = None) -> np.ndarray:
        """Vector of level-j ball indices for the leaves of the window G_{window_level}."""
        top = self.depth if window_level is None else window_level
        self._check_level(top)
        return np.arange(self.orders[top], dtype=np.int64) // self.order(j)

    def counting_identity(self, k: int) -> tuple[int, int]:
        """Both sides of Σ_{j<k} (n_{j+1} - 1) π_j = π_k - 1."""
        self._check_level(k)
        lhs = sum((self.radix.radix(j + 1) - 1) * self.orders[j] for j in range(k))
        return lhs, self.orders[k] - 1

    def _check_level(self, j: int) -> None:
        if not 0 <= j <= self.depth:
            raise TreeIndexError(f"level {j} outside [0, {self.depth}]")

    def _check_leaf(self, g: int) -> None:
        if not 0 <= g < self.leaf_count:
            raise TreeIndexError(f"leaf {g} outside [0, {self.leaf_count})")
