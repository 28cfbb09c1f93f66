"""
Deterministic hierarchical Laplacian on a finite tree.

The operator acts by penalised deviations from ball averages,

    (L f)(x) = Σ_{j=0}^{L} c_j (f(x) - A_j f(x)) + tail · (f(x) - A_L f(x)),

where A_j averages over the level-j ball containing x and ``tail`` collapses all
couplings of balls above the root. Haar functions f_{B,B'} are eigenfunctions with
eigenvalue λ(B') = Σ_{T ⊇ B'} C(T).

The singular-kernel form of the fractional derivative is not used here: both
fractional families are realised through their coupling tables.
"""

import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.spectral.tree import BallAddress, TreeIndex
from src.utils.errors import TreeIndexError

LOGGER = logging.getLogger(__name__)


class MeasureProfile(BaseModel):
    """
    Measure m_j of a level-j ball, j = 0..L, plus m_{L+1} for the tail couplings.

    The measure is homogeneous: every leaf has mass m_0 and m_j = m_0 π_j.
    """

    model_config = ConfigDict(frozen=True)

    masses: tuple[float, ...]
    beyond_root: float

    @model_validator(mode="after")
    def _check_increasing(self) -> "MeasureProfile":
        values = (*self.masses, self.beyond_root)
        if values[0] <= 0:
            raise ValueError("m_0 must be positive")
        if any(b <= a for a, b in zip(values, values[1:], strict=False)):
            raise ValueError("ball measures must be strictly increasing in the level")
        return self

    @classmethod
    def counting(cls, tree: TreeIndex, unit: float = 1.0) -> "MeasureProfile":
        """m_j = unit · π_j; the default profile (singleton mass 1)."""
        masses = tuple(unit * float(tree.order(j)) for j in range(tree.depth + 1))
        return cls(masses=masses, beyond_root=unit * float(tree.extended_order(tree.depth + 1)))

    @property
    def depth(self) -> int:
        return len(self.masses) - 1


class CouplingSpec(BaseModel):
    """
    Couplings c_j = C(B) for level-j balls and the collapsed tail Σ_{j>L} c_j.

    Use the factories: ``standard`` (λ(B) = 1/m(B)), ``fractional`` (𝔅^α, λ(B) = m(B)^{-α}),
    ``fractional_derivative`` (𝔇^α = p^α 𝔅^α) and ``custom``.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["standard", "fractional", "derivative", "custom"]
    couplings: tuple[float, ...]
    tail: float = Field(..., ge=0.0)
    alpha: float | None = Field(None, gt=0.0)
    scale: float = Field(1.0, gt=0.0)
    profile: MeasureProfile | None = None

    @field_validator("couplings")
    @classmethod
    def _check_positive(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value:
            raise ValueError("at least one coupling is required")
        if any(not c > 0 for c in value):
            raise ValueError("every coupling c_j must be strictly positive")
        return value

    @classmethod
    def standard(cls, profile: MeasureProfile) -> "CouplingSpec":
        return cls._telescoping("standard", profile, 1.0)

    @classmethod
    def fractional(cls, profile: MeasureProfile, alpha: float) -> "CouplingSpec":
        return cls._telescoping("fractional", profile, alpha)

    @classmethod
    def fractional_derivative(
        cls, tree: TreeIndex, profile: MeasureProfile, alpha: float
    ) -> "CouplingSpec":
        """𝔇^α on a constant-radix tree: the couplings of 𝔅^α multiplied by p^α."""
        radices = {tree.radix_at(j) for j in range(1, tree.depth + 1)}
        if len(radices) != 1:
            raise ValueError("the fractional derivative needs a constant radix p")
        p = radices.pop()
        base = cls._telescoping("fractional", profile, alpha)
        factor = float(p) ** alpha
        return cls(
            kind="derivative",
            couplings=tuple(factor * c for c in base.couplings),
            tail=factor * base.tail,
            alpha=alpha,
            scale=factor,
            profile=profile,
        )

    @classmethod
    def custom(cls, couplings: tuple[float, ...], tail: float) -> "CouplingSpec":
        return cls(kind="custom", couplings=tuple(couplings), tail=tail)

    @classmethod
    def _telescoping(cls, kind: str, profile: MeasureProfile, power: float) -> "CouplingSpec":
        values = [m**-power for m in (*profile.masses, profile.beyond_root)]
        couplings = tuple(a - b for a, b in zip(values, values[1:], strict=False))
        return cls(
            kind=kind,  # type: ignore[arg-type]
            couplings=couplings,
            tail=values[-1],
            alpha=None if kind == "standard" else power,
            profile=profile,
        )

    @property
    def depth(self) -> int:
        return len(self.couplings) - 1

    @property
    def power(self) -> float:
        """Exponent a with λ_j ∝ m_j^{-a}: 1 for the standard Laplacian, α otherwise."""
        return 1.0 if self.kind == "standard" else float(self.alpha or 0.0)


class LeafFunction(BaseModel):
    """Real function on the leaves of the truncated tree."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_vector(cls, value) -> np.ndarray:
        array = np.asarray(value, dtype=float)
        if array.ndim != 1:
            raise ValueError("leaf functions are one-dimensional")
        return array

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def integral(self, profile: MeasureProfile) -> float:
        """∫ f dm with singleton mass m_0."""
        return float(np.sum(self.values) * profile.masses[0])

    def inner(self, other: "LeafFunction") -> float:
        return float(np.dot(self.values, other.values))


class SpectrumTable(BaseModel):
    """Eigenvalues per level with their multiplicities on the truncated window."""

    model_config = ConfigDict(frozen=True)

    kind: str
    levels: tuple[int, ...]
    radices: tuple[int, ...]
    orders: tuple[int, ...]
    couplings: tuple[float, ...]
    eigenvalues: tuple[float, ...]
    multiplicities: tuple[int, ...]


class DeltaConditionReport(BaseModel):
    """Outcome of the check 1/κ ≤ c_j m_j^δ ≤ κ."""

    holds: bool
    in_scope: bool
    min_ratio: float
    max_ratio: float
    tail_verdict: Literal["constant", "bounded", "diverges", "vanishes", "unchecked"]


def eigenvalue(j: int, spec: CouplingSpec) -> float:
    """
    λ_j = Σ_{i=j}^{L} c_i + tail, the eigenvalue of Haar functions with parent at level j.

    Parameters:
        j (int): Level, 0 ≤ j ≤ L.
        spec (CouplingSpec): Coupling table.

    Returns:
        float: The eigenvalue; 1/m_j for the standard kind, m_j^{-α} for 𝔅^α.
    """
    if not 0 <= j <= spec.depth:
        raise TreeIndexError(f"level {j} outside [0, {spec.depth}]")
    return math.fsum(spec.couplings[j:]) + spec.tail


def haar_function(
    tree: TreeIndex, profile: MeasureProfile, parent: BallAddress, child_index: int
) -> LeafFunction:
    """
    Haar function f = (1/m(B)) 1_B - (1/m(B')) 1_{B'} for child B of parent B'.

    Parameters:
        tree (TreeIndex): The truncated tree.
        profile (MeasureProfile): Ball measures.
        parent (BallAddress): Parent ball B' at level j ≥ 1.
        child_index (int): Which of the n_j children, 0 ≤ child_index < n_j.
    """
    j = parent.level
    if j < 1:
        raise TreeIndexError("the parent of a Haar function sits at level 1 or above")
    n = tree.radix_at(j)
    if not 0 <= child_index < n:
        raise TreeIndexError(f"child index {child_index} outside [0, {n})")

    values = np.zeros(tree.leaf_count)
    parent_leaves = tree.members(parent)
    values[parent_leaves.start : parent_leaves.stop] = -1.0 / profile.masses[j]
    child = BallAddress(level=j - 1, index=parent.index * n + child_index)
    child_leaves = tree.members(child)
    values[child_leaves.start : child_leaves.stop] += 1.0 / profile.masses[j - 1]
    return LeafFunction(values=values)


def ball_average(tree: TreeIndex, values: np.ndarray, j: int) -> np.ndarray:
    """A_j f: average of f over the level-j ball of every leaf (trailing axis = leaves)."""
    pi = tree.order(j)
    blocks = values.reshape(*values.shape[:-1], -1, pi)
    means = blocks.mean(axis=-1, keepdims=True)
    return np.broadcast_to(means, blocks.shape).reshape(values.shape)


def apply_L(tree: TreeIndex, f: LeafFunction, spec: CouplingSpec) -> LeafFunction:
    """
    Pointwise hierarchical Laplacian on the whole truncated window.

    Constants are mapped to zero; on zero-mean functions the collapsed tail is exact.
    """
    if f.values.shape[-1] != tree.leaf_count:
        raise ValueError(f"expected {tree.leaf_count} leaf values, got {f.values.shape[-1]}")
    if spec.depth != tree.depth:
        raise ValueError(f"coupling table depth {spec.depth} differs from tree depth {tree.depth}")

    return LeafFunction(values=_laplacian(tree, f.values, spec))


def operator_matrix(tree: TreeIndex, spec: CouplingSpec) -> np.ndarray:
    """Dense π_L × π_L matrix of ``apply_L``; column i is the image of the i-th indicator."""
    if spec.depth != tree.depth:
        raise ValueError(f"coupling table depth {spec.depth} differs from tree depth {tree.depth}")
    return _laplacian(tree, np.eye(tree.leaf_count), spec).T


def _laplacian(tree: TreeIndex, x: np.ndarray, spec: CouplingSpec) -> np.ndarray:
    result = np.zeros_like(x)
    for j, c in enumerate(spec.couplings):
        result += c * (x - ball_average(tree, x, j))
    result += spec.tail * (x - ball_average(tree, x, tree.depth))
    return result


def spectrum_table(tree: TreeIndex, spec: CouplingSpec) -> SpectrumTable:
    """Eigenvalue λ_j and multiplicity (n_j - 1) π_L / π_j for every level j ≥ 1."""
    levels = tuple(range(tree.depth + 1))
    multiplicities = tuple(
        0 if j == 0 else (tree.radix_at(j) - 1) * tree.ball_count(j) for j in levels
    )
    return SpectrumTable(
        kind=spec.kind,
        levels=levels,
        radices=tuple(tree.radix.radix(j) for j in levels),
        orders=tree.orders,
        couplings=spec.couplings,
        eigenvalues=tuple(eigenvalue(j, spec) for j in levels),
        multiplicities=multiplicities,
    )


def check_delta_condition(
    spec: CouplingSpec,
    delta: float,
    kappa: float,
    tree: TreeIndex | None = None,
    extra_levels: int = 64,
) -> DeltaConditionReport:
    """
    Check 1/κ ≤ c_j m_j^δ ≤ κ on every level of the window and, when the tree is
    given, on ``extra_levels`` levels above the root through the continuation rule.

    ``in_scope`` is False when δ ≤ 1: the Poisson rate theorem then does not apply.
    Custom tables are measured against the counting profile of ``tree``; their levels
    beyond the root are unchecked.
    """
    if kappa <= 0:
        raise ValueError("κ must be positive")

    profile = spec.profile
    if profile is None:
        if tree is None:
            raise ValueError("a custom table needs the tree to build its counting profile")
        if spec.depth != tree.depth:
            raise ValueError(
                f"coupling table depth {spec.depth} differs from tree depth {tree.depth}"
            )
        profile = MeasureProfile.counting(tree)
    log_ratios = [
        math.log(c) + delta * math.log(m)
        for c, m in zip(spec.couplings, profile.masses, strict=True)
    ]

    verdict: Literal["constant", "bounded", "diverges", "vanishes", "unchecked"] = "unchecked"
    if tree is not None and spec.kind != "custom":
        a = spec.power
        unit = profile.masses[0]
        log_masses = [
            math.log(unit) + tree.radix.log_order(j)
            for j in range(tree.depth + 1, tree.depth + extra_levels + 2)
        ]
        # c_j = scale (m_j^{-a} - m_{j+1}^{-a}) = scale m_j^{-a} (1 - n_{j+1}^{-a})
        for offset, log_m in enumerate(log_masses[:-1]):
            n_next = tree.radix.radix(tree.depth + offset + 2)
            log_c = math.log(spec.scale) - a * log_m + math.log1p(-(float(n_next) ** -a))
            log_ratios.append(log_c + delta * log_m)
        if math.isclose(delta, a, rel_tol=0.0, abs_tol=1e-12):
            verdict = "constant" if tree.radix.continuation.rule == "constant" else "bounded"
        elif delta > a:
            verdict = "diverges"
        else:
            verdict = "vanishes"

    ratios = np.exp(log_ratios)
    low, high = float(ratios.min()), float(ratios.max())
    holds = 1.0 / kappa <= low and high <= kappa and verdict not in ("diverges", "vanishes")
    in_scope = delta > 1.0
    if not in_scope:
        LOGGER.debug("δ = %s is outside the scope of the rate theorem (needs δ > 1)", delta)
    return DeltaConditionReport(
        holds=holds, in_scope=in_scope, min_ratio=low, max_ratio=high, tail_verdict=verdict
    )
