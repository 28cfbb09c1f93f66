"""
Choice of the dependency neighbourhoods B_g = g + G_k.

For every window level ℓ a level k = k(ℓ) < ℓ is chosen so that both

    π_k / π_ℓ ≤ target   and   π_ℓ π_{k+1}^{-(1+γ)} ≤ target,

with target = m^{-ℓγ/(log_m M + 1 + γ)} when the radices are bounded and
target = M_{ℓ-1}^{-γ/3} when they are not. Products of radices are compared exactly
whenever the exponents are rationals with small denominators.
"""

import logging
import math
from fractions import Fraction
from functools import lru_cache
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field

from src.spectral.tree import RadixSequence
from src.utils.errors import BoundsError, FeasibilityError

LOGGER = logging.getLogger(__name__)

MAX_EXACT_DENOMINATOR = 12
LOG_SLACK = 1e-9
SUBSEQUENCE_SEARCH_LIMIT = 100_000

Exponent = Union[Fraction, float]


def as_fraction(value: Exponent, max_denominator: int = MAX_EXACT_DENOMINATOR) -> Fraction | None:
    """``value`` as a small-denominator rational, or None when it is not one."""
    if isinstance(value, Fraction):
        return value if value.denominator <= max_denominator else None
    candidate = Fraction(value).limit_denominator(max_denominator)
    if abs(float(candidate) - value) <= 1e-12 * max(1.0, abs(value)):
        return candidate
    return None


def compare_powers(
    lhs: list[tuple[int, Exponent]], rhs: list[tuple[int, Exponent]]
) -> Literal[-1, 0, 1]:
    """
    Sign of Π b^e (lhs) - Π b^e (rhs) for integer bases b ≥ 1.

    Exact when every exponent is a small-denominator rational: both sides are raised to
    the common denominator and compared as integers. Otherwise the logarithms are compared
    and differences within ``LOG_SLACK`` count as equality.
    """
    fractions = [as_fraction(e) for _, e in (*lhs, *rhs)]
    if all(f is not None for f in fractions):
        denominator = math.lcm(*(f.denominator for f in fractions))  # type: ignore[union-attr]
        num, den = 1, 1
        for (base, _), frac in zip(lhs, fractions[: len(lhs)], strict=True):
            power = int(frac * denominator)  # type: ignore[operator]
            if power >= 0:
                num *= base**power
            else:
                den *= base**-power
        for (base, _), frac in zip(rhs, fractions[len(lhs) :], strict=True):
            power = int(frac * denominator)  # type: ignore[operator]
            if power >= 0:
                den *= base**power
            else:
                num *= base**-power
        return 1 if num > den else (-1 if num < den else 0)

    left = [float(e) * math.log(b) for b, e in lhs]
    right = [float(e) * math.log(b) for b, e in rhs]
    diff = math.fsum(left) - math.fsum(right)
    scale = max(1.0, math.fsum(abs(x) for x in (*left, *right)))
    if abs(diff) <= LOG_SLACK * scale:
        return 0
    return 1 if diff > 0 else -1


class SequenceStats(BaseModel):
    """
    m = inf n_j, M = sup n_j (None when unbounded), the record subsequence j_0 = 0 < j_1 = 1 < ...
    with j_{i+1} = min{j > j_i : n_j > n_{j_i} and n_j > n_{j_i}^{γ/3}}, and its radices.

    ``indices`` extends past ``horizon`` for unbounded radices, so every ℓ ≤ horizon lies in
    some (j_i, j_{i+1}].
    """

    model_config = ConfigDict(frozen=True)

    radix: RadixSequence
    gamma: float = Field(..., gt=0.0)
    horizon: int
    m: int
    M: int | None
    indices: tuple[int, ...]
    records: tuple[int, ...]

    @property
    def bounded(self) -> bool:
        return self.M is not None

    @property
    def exponent(self) -> Exponent:
        """γ as an exact rational when possible."""
        frac = as_fraction(self.gamma)
        return frac if frac is not None else self.gamma

    def running_max(self, level: int) -> int:
        """M_ℓ = sup{n_{j_i} : j_i ≤ ℓ}; M_0 = 1."""
        if level < 0:
            raise ValueError(f"level {level} is negative")
        best = 1
        for j, n in zip(self.indices, self.records, strict=True):
            if j > level:
                break
            best = n
        return best

    def segment(self, level: int) -> int:
        """The i with j_i < ℓ ≤ j_{i+1}."""
        for i in range(len(self.indices) - 1):
            if self.indices[i] < level <= self.indices[i + 1]:
                return i
        raise FeasibilityError(f"level {level} lies beyond the computed subsequence")


def sequence_stats(radix: RadixSequence, gamma: float, horizon: int = 64) -> SequenceStats:
    """
    Compute m, M and the record subsequence up to (and, when unbounded, just past) ``horizon``.

    Parameters:
        radix (RadixSequence): Radices n_1, n_2, ... with their continuation.
        gamma (float): Tail exponent γ > 0.
        horizon (int): Largest window level of interest.
    """
    if gamma <= 0:
        raise BoundsError("γ must be positive")
    stats_gamma = as_fraction(gamma)
    third: Exponent = stats_gamma / 3 if stats_gamma is not None else gamma / 3.0
    indices = [0]
    records = [1]
    j = 0
    while True:
        j += 1
        if radix.bounded and j > horizon:
            break
        if j > horizon + SUBSEQUENCE_SEARCH_LIMIT:
            raise FeasibilityError("the record subsequence does not advance")
        n = radix.radix(j)
        last = records[-1]
        if n > last and compare_powers([(n, 1)], [(last, third)]) > 0:
            indices.append(j)
            records.append(n)
            if not radix.bounded and j > horizon:
                break
    return SequenceStats(
        radix=radix,
        gamma=gamma,
        horizon=horizon,
        m=radix.inf_radix,
        M=radix.sup_radix,
        indices=tuple(indices),
        records=tuple(records),
    )


class RecursionStep(BaseModel):
    """One step w_{m-1} → w_m of the unbounded-branch construction."""

    model_config = ConfigDict(frozen=True)

    r: int
    u: int
    v: int
    u_big: bool


class NeighborhoodChoice(BaseModel):
    """
    The selected k(ℓ) with its target. ``target`` is base^{-exponent}; ``trivial`` marks
    targets that are not below one, ``fallback`` a recursion choice replaced by the largest
    k of the exhaustive search.
    """

    model_config = ConfigDict(frozen=True)

    level: int
    k: int
    branch: Literal["bounded", "unbounded"]
    target: float
    target_base: int
    target_exponent: float
    trivial: bool = False
    fallback: bool = False
    audit: tuple[RecursionStep, ...] = ()


def _log_ratio(m: int, M: int) -> Exponent:
    """log_m M, exact when M is a power of m."""
    power, value = 0, 1
    while value < M:
        value *= m
        power += 1
    if value == M:
        return Fraction(power)
    return math.log(M) / math.log(m)


def _bounded_exponent(level: int, stats: SequenceStats) -> Exponent:
    assert stats.M is not None
    log_mM = _log_ratio(stats.m, stats.M)
    gamma = stats.exponent
    if isinstance(log_mM, Fraction) and isinstance(gamma, Fraction):
        return level * gamma / (log_mM + 1 + gamma)
    return level * float(gamma) / (float(log_mM) + 1.0 + float(gamma))


def _target(level: int, stats: SequenceStats) -> tuple[int, Exponent]:
    if stats.bounded:
        return stats.m, _bounded_exponent(level, stats)
    gamma = stats.exponent
    third: Exponent = gamma / 3 if isinstance(gamma, Fraction) else gamma / 3.0
    return stats.running_max(level - 1), third


def _satisfies(level: int, k: int, stats: SequenceStats, base: int, exponent: Exponent) -> bool:
    radix = stats.radix
    gamma = stats.exponent
    pi_k, pi_l, pi_k1 = radix.order(k), radix.order(level), radix.order(k + 1)
    first = compare_powers([(pi_k, 1), (base, exponent)], [(pi_l, 1)]) <= 0
    second = compare_powers([(pi_l, 1), (base, exponent)], [(pi_k1, 1 + gamma)]) <= 0
    return first and second


def feasible_ks(level: int, stats: SequenceStats) -> list[int]:
    """Every k in [0, ℓ) meeting both inequalities; the exhaustive oracle for ``select_k``."""
    if level < 1:
        raise BoundsError("window level must be at least 1")
    base, exponent = _target(level, stats)
    return [k for k in range(level) if _satisfies(level, k, stats, base, exponent)]


def check_choice(choice: NeighborhoodChoice, stats: SequenceStats) -> bool:
    base, exponent = _target(choice.level, stats)
    return _satisfies(choice.level, choice.k, stats, base, exponent)


@lru_cache(maxsize=256)
def _segment_choices(stats: SequenceStats, i: int) -> dict[int, tuple[int, tuple[RecursionStep, ...]]]:
    """k(ℓ) for every ℓ in (j_i, j_{i+1}] by the u/v/w recursion."""
    radix = stats.radix
    j_i, j_next = stats.indices[i], stats.indices[i + 1]
    n_ji = stats.records[i]
    gamma = stats.exponent
    third: Exponent = gamma / 3 if isinstance(gamma, Fraction) else gamma / 3.0
    two_thirds: Exponent = 2 * third

    def big(b: int) -> bool:
        return compare_powers([(radix.radix(b), 1)], [(n_ji, third)]) >= 0

    def reaches(start: int, stop: int, power: Exponent) -> bool:
        product = math.prod(radix.radix(j) for j in range(start, stop + 1))
        return compare_powers([(product, 1)], [(n_ji, power)]) >= 0

    def u_of(r: int) -> int:
        for u in range(r + 2, j_next + 1):
            if big(u) or reaches(r + 2, u, two_thirds):
                return u
        raise AssertionError("j_{i+1} is always a big index")

    def v_of(r: int, u: int) -> int:
        if big(u):
            return u - 1
        for v in range(r + 2, j_next + 1):
            if reaches(r + 2, v, third):
                return v - 1
        raise AssertionError("the product up to u(r) already exceeds the γ/3 threshold")

    choices: dict[int, tuple[int, tuple[RecursionStep, ...]]] = {}
    w_prev, k_prev = j_i, j_i - 1
    steps: list[RecursionStep] = []
    while w_prev < j_next:
        u = u_of(k_prev)
        v = v_of(k_prev, u)
        if u <= w_prev:
            raise FeasibilityError(f"recursion stalled at w = {w_prev} in segment {i}")
        steps.append(RecursionStep(r=k_prev, u=u, v=v, u_big=big(u)))
        for level in range(w_prev + 1, u):
            choices[level] = (k_prev, tuple(steps))
        choices[u] = (v, tuple(steps))
        w_prev, k_prev = u, v
    return choices


def select_k(level: int, stats: SequenceStats) -> NeighborhoodChoice:
    """
    k(ℓ) by the closed floor formula (bounded radices) or by the segment recursion
    (unbounded radices).

    Parameters:
        level (int): Window level ℓ ≥ 1.
        stats (SequenceStats): Sequence statistics covering ℓ.

    Returns:
        NeighborhoodChoice: k, branch, target and, for the recursion, its audit trail.
    """
    if level < 1:
        raise BoundsError("window level must be at least 1; no k < 0 exists")
    base, exponent = _target(level, stats)
    target = float(base) ** -float(exponent)

    if stats.bounded:
        assert stats.M is not None
        log_mM = _log_ratio(stats.m, stats.M)
        gamma = stats.exponent
        if isinstance(log_mM, Fraction) and isinstance(gamma, Fraction):
            k = math.floor(level * (log_mM + 1) / (log_mM + 1 + gamma))
        else:
            x = level * (float(log_mM) + 1.0) / (float(log_mM) + 1.0 + float(gamma))
            k = math.floor(x + 1e-12)
        k = min(k, level - 1)
        LOGGER.debug("level %d: bounded branch k = %d", level, k)
        return NeighborhoodChoice(
            level=level,
            k=k,
            branch="bounded",
            target=target,
            target_base=base,
            target_exponent=float(exponent),
        )

    if level == 1:
        return NeighborhoodChoice(
            level=1,
            k=0,
            branch="unbounded",
            target=target,
            target_base=base,
            target_exponent=float(exponent),
            trivial=True,
        )
    k, audit = _segment_choices(stats, stats.segment(level))[level]
    LOGGER.debug("level %d: recursion k = %d after %d steps", level, k, len(audit))
    choice = NeighborhoodChoice(
        level=level,
        k=k,
        branch="unbounded",
        target=target,
        target_base=base,
        target_exponent=float(exponent),
        trivial=target >= 1.0,
        audit=audit,
    )
    if not check_choice(choice, stats):
        # the recursion guarantees the target only for γ ≤ 3
        candidates = feasible_ks(level, stats)
        if not candidates:
            raise FeasibilityError(f"no k < {level} meets the neighbourhood target")
        LOGGER.warning(
            "level %d: recursion choice k = %d misses the target at γ = %s, using k = %d",
            level,
            k,
            stats.exponent,
            candidates[-1],
        )
        choice = choice.model_copy(update={"k": candidates[-1], "fallback": True})
    return choice
