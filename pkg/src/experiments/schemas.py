"""
Experiment configuration and result rows.

Scientifically meaningful fields (window centre and scale, levels, trial counts) have no
defaults; numerical knobs default from ``configs/config.yml``. Every result row is a flat
model whose field order is the CSV header of its kind.
"""

import math
import re
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.load_config import CFG
from src.spectral.laplacian import CouplingSpec, MeasureProfile
from src.spectral.tree import RadixSequence, TreeIndex
from src.stochastic.dos import QuadratureSettings
from src.stochastic.noise import NoiseFamilyType, NoiseSpec, UniformNoise
from src.stochastic.perturb import AlphaTable
from src.utils.errors import ConfigError

SCHEMA_VERSION = 1

ExperimentKind = Literal["spectrum", "simulate", "bounds", "dos", "verify"]

_PI_MULTIPLE = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*(pi|π)\s*$")


class StrictModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ConstantRadix(StrictModel):
    rule: Literal["constant"]
    p: int = Field(..., ge=2)
    depth: int = Field(..., ge=1)

    def sequence(self) -> RadixSequence:
        return RadixSequence.constant(self.p, self.depth)


class ListRadix(StrictModel):
    """Explicit radices n_1..n_L, repeated cyclically beyond L."""

    rule: Literal["list"]
    values: tuple[int, ...] = Field(..., min_length=1)

    def sequence(self) -> RadixSequence:
        return RadixSequence(radices=self.values)


class FormulaRadix(StrictModel):
    """n_j = slope · j + intercept."""

    rule: Literal["formula"]
    slope: int = Field(..., ge=0)
    intercept: int
    depth: int = Field(..., ge=1)

    def sequence(self) -> RadixSequence:
        return RadixSequence.linear(self.slope, self.intercept, self.depth)


RadixRule = Annotated[Union[ConstantRadix, ListRadix, FormulaRadix], Field(discriminator="rule")]


class CouplingConfig(StrictModel):
    kind: Literal["standard", "fractional", "derivative"]
    alpha: float | None = Field(None, gt=0.0)

    @model_validator(mode="after")
    def _check_alpha(self) -> "CouplingConfig":
        if self.kind != "standard" and self.alpha is None:
            raise ValueError(f"a {self.kind} coupling needs alpha")
        return self

    def build(self, tree: TreeIndex) -> CouplingSpec:
        profile = MeasureProfile.counting(tree)
        if self.kind == "standard":
            return CouplingSpec.standard(profile)
        assert self.alpha is not None
        if self.kind == "fractional":
            return CouplingSpec.fractional(profile, self.alpha)
        return CouplingSpec.fractional_derivative(tree, profile, self.alpha)


class ModelConfig(StrictModel):
    radix: RadixRule
    coupling: CouplingConfig = CouplingConfig(kind="standard")

    def sequence(self) -> RadixSequence:
        return self.radix.sequence()

    def tree(self, depth: int | None = None) -> TreeIndex:
        radix = self.sequence()
        return TreeIndex(radix=radix, depth=radix.depth if depth is None else depth)


class PadicAlpha(StrictModel):
    source: Literal["padic"]
    alpha: float = Field(..., gt=1.0)
    depth: int = Field(64, ge=1)


class SingleTermAlpha(StrictModel):
    source: Literal["single_term"]


class CouplingAlpha(StrictModel):
    """α_k = c_k/λ_0 from the model's coupling table."""

    source: Literal["coupling"]
    gamma: float | None = Field(None, gt=0.0)


class ExplicitAlpha(StrictModel):
    source: Literal["explicit"]
    values: tuple[float, ...] = Field(..., min_length=1)
    remainder: float = Field(0.0, ge=0.0)
    K: float = Field(..., gt=0.0)
    gamma: float = Field(..., gt=0.0)


AlphaSource = Annotated[
    Union[PadicAlpha, SingleTermAlpha, CouplingAlpha, ExplicitAlpha], Field(discriminator="source")
]


class WindowConfig(StrictModel):
    """Window centre t_0 and scale c; c accepts multiples of pi such as ``pi`` or ``2*pi``."""

    t0: float = Field(..., gt=-1.0, lt=1.0)
    c: float = Field(..., gt=0.0)

    @field_validator("c", mode="before")
    @classmethod
    def _parse_pi(cls, value: Any) -> Any:
        if isinstance(value, str):
            match = _PI_MULTIPLE.match(value)
            if match is None:
                raise ValueError(f"cannot read {value!r} as a number or a multiple of pi")
            factor = float(match.group(1)) if match.group(1) else 1.0
            return factor * math.pi
        return value


class VerifyConfig(StrictModel):
    """Indicator f = 1_[low, high] and the laws of X (and Y) and Z."""

    low: float
    high: float
    x: NoiseFamilyType = UniformNoise()
    z: NoiseFamilyType = UniformNoise()


class NumericsConfig(StrictModel):
    truncation_tolerance: float = Field(default_factory=lambda: CFG.truncation_tolerance, gt=0.0)
    max_depth: int = Field(default_factory=lambda: CFG.max_depth, ge=1)
    chunk_size: int = Field(default_factory=lambda: CFG.chunk_size, ge=1)
    quadrature: QuadratureSettings = Field(default_factory=QuadratureSettings)
    bin_width: float | None = Field(None, gt=0.0)
    b3_outer: int = Field(default_factory=lambda: CFG.b3_outer, ge=2)
    b3_inner: int = Field(default_factory=lambda: CFG.b3_inner, ge=1)
    estimate_b2: bool = True
    estimate_b3: bool = True


class ExperimentConfig(StrictModel):
    """One experiment file."""

    kind: ExperimentKind
    model: ModelConfig
    alpha_table: AlphaSource = SingleTermAlpha(source="single_term")
    noise: NoiseSpec = NoiseSpec()
    window: WindowConfig | None = None
    levels: tuple[int, ...] = ()
    trials: int | None = Field(None, ge=2)
    seed: int = Field(0, ge=0)
    grid: tuple[float, ...] = ()
    verify: VerifyConfig | None = None
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)

    @model_validator(mode="after")
    def _check_kind(self) -> "ExperimentConfig":
        kind = self.kind
        if kind in ("simulate", "bounds", "dos") and self.window is None:
            raise ValueError(f"a {kind} experiment needs window.t0 and window.c")
        if kind in ("simulate", "bounds") and not self.levels:
            raise ValueError(f"a {kind} experiment needs at least one level")
        if any(level < 1 for level in self.levels):
            raise ValueError("window levels start at 1")
        if kind in ("simulate", "dos", "verify") and self.trials is None:
            raise ValueError(f"a {kind} experiment needs the number of trials")
        if kind == "verify" and self.verify is None:
            raise ValueError("a verify experiment needs the verify section")
        if isinstance(self.alpha_table, PadicAlpha):
            radix = self.model.radix
            if not isinstance(radix, ConstantRadix):
                raise ValueError("a padic alpha table needs a constant radix")
        if isinstance(self.alpha_table, CouplingAlpha) and self.model.coupling.kind == "standard":
            if self.alpha_table.gamma is None:
                raise ValueError("alpha_table.gamma is required for a standard coupling")
        return self

    def alpha(self) -> AlphaTable:
        source = self.alpha_table
        if isinstance(source, PadicAlpha):
            assert isinstance(self.model.radix, ConstantRadix)
            return AlphaTable.padic(self.model.radix.p, source.alpha, source.depth)
        if isinstance(source, SingleTermAlpha):
            return AlphaTable.single_term()
        if isinstance(source, CouplingAlpha):
            tree = self.model.tree()
            return AlphaTable.from_coupling(self.model.coupling.build(tree), tree.radix, source.gamma)
        return AlphaTable.explicit(source.values, source.remainder, source.K, source.gamma)

    def params(self) -> dict[str, Any]:
        """Echo of the experiment parameters without the seed, for result files."""
        return self.model_dump(mode="json", exclude={"seed"})


def _field_path(loc: tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc)


def parse_config(data: dict[str, Any]) -> ExperimentConfig:
    """Validate a raw mapping, turning every validation failure into one ConfigError."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        problems = [f"{_field_path(err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()]
        error = ConfigError("; ".join(problems))
        error.field = _field_path(exc.errors()[0]["loc"]) or None
        raise error from exc


def load_experiment(path: str | Path, kind: str | None = None) -> ExperimentConfig:
    """
    Read and validate a YAML (or JSON) experiment file.

    ``kind`` fills in a missing ``kind`` entry and must agree with a present one.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    if kind is not None:
        if data.setdefault("kind", kind) != kind:
            raise ConfigError(f"the file describes a {data['kind']} experiment, not {kind}", field="kind")
    return parse_config(data)


class SpectrumRow(StrictModel):
    level: int
    radix: int
    order: int
    coupling: float
    eigenvalue: float
    multiplicity: int


class SimulateRow(StrictModel):
    ell: int
    order: int
    trials: int
    k: int
    lambda_mc: float
    lambda_mc_stderr: float
    lambda_quad: float | None
    site_frequency: float
    tv_mc: float
    tv_mc_stderr: float
    tv_quad: float | None
    tv_quad_stderr: float | None
    tv_bias_diagnostic: float
    iid_envelope: float
    b2_mc: float | None
    b2_mc_stderr: float | None
    b3_pre_mc: float | None
    b3_pre_mc_stderr: float | None
    seed: int


class BoundsRow(StrictModel):
    ell: int
    k: int
    branch: str
    target: float
    trivial: bool
    lambda_ell: float
    b1: float
    b2_bound: float
    b3_bound: float
    prefactor: float
    constant_c: float
    envelope: float
    assembled: float
    theorem_bound: float
    applicable: bool


class DosRow(StrictModel):
    t: float
    eta_quad: float | None
    eta_quad_error: float | None
    eta_hist: float
    eta_hist_error: float
    density_cap: float


class VerifyRow(StrictModel):
    low: float
    high: float
    trials: int
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    oracle: float
    z_score: float
    seed: int


class CompareRow(StrictModel):
    ell: int
    tv_hat: float
    tv_stderr: float
    bound: float
    applicable: bool
    passed: bool | None


ROW_MODELS: dict[str, type[StrictModel]] = {
    "spectrum": SpectrumRow,
    "simulate": SimulateRow,
    "bounds": BoundsRow,
    "dos": DosRow,
    "verify": VerifyRow,
    "compare": CompareRow,
}


def header(kind: str) -> list[str]:
    """CSV header of a result kind."""
    return list(ROW_MODELS[kind].model_fields)
