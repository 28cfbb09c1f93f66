"""
Shared pytest fixtures.
"""

import math
import sys
from pathlib import Path

import pytest

# the project root goes on sys.path so that ``src`` imports resolve
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from src.spectral.tree import RadixSequence, TreeIndex  # noqa: E402
from src.stochastic.noise import NoiseSpec  # noqa: E402
from src.stochastic.perturb import AlphaTable  # noqa: E402


@pytest.fixture
def binary_tree() -> TreeIndex:
    """The 2-adic window of depth 3."""
    return TreeIndex.constant(2, 3)


@pytest.fixture
def padic_alpha() -> AlphaTable:
    """p = 2, α = 2: α_0 = 3/4, γ = 1, K = 1."""
    return AlphaTable.padic(2, 2.0)


@pytest.fixture
def single_term() -> AlphaTable:
    return AlphaTable.single_term()


@pytest.fixture
def uniform_noise() -> NoiseSpec:
    return NoiseSpec.uniform()


@pytest.fixture
def binary_radix() -> RadixSequence:
    return RadixSequence.constant(2, 16)


@pytest.fixture
def experiment_data():
    """Factory of raw experiment mappings on the 2-adic tree with c = π."""

    def build(kind: str, **overrides):
        data = {
            "kind": kind,
            "model": {
                "radix": {"rule": "constant", "p": 2, "depth": 6},
                "coupling": {"kind": "fractional", "alpha": 2.0},
            },
            "alpha_table": {"source": "padic", "alpha": 2.0},
            "noise": {"base": {"kind": "uniform"}},
            "window": {"t0": 0.0, "c": math.pi},
            "levels": [2, 3],
            "trials": 400,
            "seed": 7,
        }
        data.update(overrides)
        return data

    return build
