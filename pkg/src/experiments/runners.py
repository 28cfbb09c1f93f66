"""
Run one experiment kind and write its result files.

Every kind writes ``<kind>.csv`` and ``<kind>.json`` into the output directory; the values
depend only on (config, seed), never on the worker count.
"""

import csv
import json
import logging
import math
from collections.abc import Callable, Sequence
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.bounds.chen_stein import (
    assemble_bound_report,
    estimate_b3_pre_triangle,
    mean_with_stderr,
    neighbourhood_pairs,
)
from src.bounds.neighborhoods import sequence_stats, select_k
from src.experiments.schemas import (
    SCHEMA_VERSION,
    BoundsRow,
    DosRow,
    ExperimentConfig,
    SimulateRow,
    SpectrumRow,
    StrictModel,
    VerifyRow,
    header,
)
from src.load_config import CFG
from src.spectral.laplacian import spectrum_table
from src.spectral.tree import TreeIndex
from src.stochastic.dos import CharFnSpec, empirical_density, eta_grid, lambda_ell_quadrature
from src.stochastic.noise import NoiseSpec
from src.stochastic.perturb import (
    AlphaTable,
    IndicatorSpec,
    conditioning_oracle,
    sample_u0,
    sample_u_batch,
    verify_conditioning_identity,
)
from src.stochastic.pointproc import (
    Window,
    count_W_batch,
    iid_envelope,
    poisson_law,
    tv_estimate,
)
from src.utils.app_utils import prepare_output_dir
from src.utils.errors import ConfigError, FeasibilityError
from src.utils.utilities import chunk_ranges, ordered_map

LOGGER = logging.getLogger(__name__)


class RunResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: str
    seed: int
    rows: tuple[StrictModel, ...]
    csv_path: Path
    json_path: Path


def _csv_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(
    kind: str, rows: Sequence[StrictModel], params: dict[str, Any], seed: int, out: Path
) -> tuple[Path, Path]:
    """Write ``<kind>.csv`` and its JSON mirror; returns both paths."""
    fields = header(kind)
    csv_path = out / f"{kind}.csv"
    json_path = out / f"{kind}.json"
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_csv_value(getattr(row, name)) for name in fields])
    document = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "seed": seed,
        "params": params,
        "rows": [row.model_dump(mode="json") for row in rows],
    }
    with open(json_path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2, sort_keys=False, allow_nan=False)
        handle.write("\n")
    LOGGER.info("wrote %s and %s", csv_path, json_path)
    return csv_path, json_path


def run_spectrum(config: ExperimentConfig) -> list[SpectrumRow]:
    tree = config.model.tree()
    table = spectrum_table(tree, config.model.coupling.build(tree))
    return [
        SpectrumRow(
            level=j,
            radix=table.radices[j],
            order=table.orders[j],
            coupling=table.couplings[j],
            eigenvalue=table.eigenvalues[j],
            multiplicity=table.multiplicities[j],
        )
        for j in table.levels
    ]


def _lambda_quadrature(
    charfn: CharFnSpec, order: int, config: ExperimentConfig
) -> float | None:
    assert config.window is not None
    try:
        result = lambda_ell_quadrature(
            order, charfn, config.window.c, config.window.t0, config.numerics.quadrature
        )
    except FeasibilityError as exc:
        LOGGER.warning("λ(ℓ) quadrature unavailable: %s", exc)
        return None
    if result.flag == "cutoff_capped":
        LOGGER.warning("λ(ℓ) quadrature at π_ℓ = %d reached the cutoff cap", order)
    return result.value


def _characteristic_function(config: ExperimentConfig, alpha: AlphaTable) -> CharFnSpec:
    return CharFnSpec.build(alpha, config.noise, config.numerics.quadrature)


def run_bounds(config: ExperimentConfig) -> list[BoundsRow]:
    assert config.window is not None
    alpha = config.alpha()
    radix = config.model.sequence()
    stats = sequence_stats(radix, alpha.gamma, horizon=max(config.levels))
    charfn = _characteristic_function(config, alpha)
    rows = []
    for level in config.levels:
        lam = _lambda_quadrature(charfn, radix.order(level), config)
        if lam is None:
            raise FeasibilityError(f"λ(ℓ) is needed for the bound at level {level}")
        report = assemble_bound_report(level, stats, alpha, config.noise, config.window.c, lam)
        LOGGER.info("level %d: k = %d, bound %.4g", level, report.k, report.theorem_bound)
        rows.append(
            BoundsRow(
                ell=level,
                k=report.k,
                branch=report.branch,
                target=report.target,
                trivial=report.trivial,
                lambda_ell=report.lambda_ell,
                b1=report.b1,
                b2_bound=report.b2_bound,
                b3_bound=report.b3_bound,
                prefactor=report.prefactor,
                constant_c=report.constant_c,
                envelope=report.envelope,
                assembled=report.assembled,
                theorem_bound=report.theorem_bound,
                applicable=report.applicable,
            )
        )
    return rows


def _simulate_chunk(
    trials: range,
    tree: TreeIndex,
    alpha: AlphaTable,
    noise: NoiseSpec,
    window: Window,
    depth: int,
    block: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Counts W_ℓ and neighbourhood pair counts of one chunk of trials."""
    values = sample_u_batch(tree, alpha, noise, window.level, seed, trials, depth)
    return count_W_batch(values, window), neighbourhood_pairs(values, window, block)


def run_simulate(config: ExperimentConfig, seed: int, workers: int) -> list[SimulateRow]:
    assert config.window is not None and config.trials is not None
    numerics = config.numerics
    alpha = config.alpha()
    radix = config.model.sequence()
    tree = TreeIndex(radix=radix, depth=max(max(config.levels), radix.depth))
    stats = sequence_stats(radix, alpha.gamma, horizon=max(config.levels))
    charfn = _characteristic_function(config, alpha)
    t0, c = config.window.t0, config.window.c

    rows = []
    for level in config.levels:
        window = Window.build(tree, level, t0, c)
        depth = alpha.required_depth(
            radix, level, c, numerics.truncation_tolerance, numerics.max_depth
        )
        k = select_k(level, stats).k
        worker: Callable[[range], tuple[np.ndarray, np.ndarray]] = partial(
            _simulate_chunk,
            tree=tree,
            alpha=alpha,
            noise=config.noise,
            window=window,
            depth=depth,
            block=tree.order(k),
            seed=seed,
        )
        LOGGER.info("level %d: %d trials, truncation depth %d", level, config.trials, depth)
        parts = ordered_map(
            worker,
            chunk_ranges(config.trials, numerics.chunk_size),
            workers=workers,
            progress=CFG.progress,
            desc=f"level {level}",
        )
        counts = np.concatenate([part[0] for part in parts])
        pairs = np.concatenate([part[1] for part in parts])

        lam_mc = mean_with_stderr(counts)
        lam_quad = _lambda_quadrature(charfn, window.order, config)
        tv_mc = tv_estimate(counts, poisson_law(lam_mc.value))
        tv_quad = tv_estimate(counts, poisson_law(lam_quad)) if lam_quad is not None else None
        lam_ref = lam_quad if lam_quad is not None else lam_mc.value

        b2 = mean_with_stderr(pairs) if numerics.estimate_b2 else None
        b3 = None
        if numerics.estimate_b3:
            b3 = estimate_b3_pre_triangle(
                window,
                k,
                alpha,
                config.noise,
                lam_ref,
                depth,
                seed,
                numerics.b3_outer,
                numerics.b3_inner,
            )
        rows.append(
            SimulateRow(
                ell=level,
                order=window.order,
                trials=config.trials,
                k=k,
                lambda_mc=lam_mc.value,
                lambda_mc_stderr=lam_mc.stderr,
                lambda_quad=lam_quad,
                site_frequency=lam_mc.value / window.order,
                tv_mc=tv_mc.value,
                tv_mc_stderr=tv_mc.stderr,
                tv_quad=tv_quad.value if tv_quad is not None else None,
                tv_quad_stderr=tv_quad.stderr if tv_quad is not None else None,
                tv_bias_diagnostic=tv_mc.diagnostic,
                iid_envelope=iid_envelope(lam_ref, window.order),
                b2_mc=b2.value if b2 is not None else None,
                b2_mc_stderr=b2.stderr if b2 is not None else None,
                b3_pre_mc=b3.value if b3 is not None else None,
                b3_pre_mc_stderr=b3.stderr if b3 is not None else None,
                seed=seed,
            )
        )
    return rows


def run_dos(config: ExperimentConfig, seed: int, workers: int) -> list[DosRow]:
    assert config.window is not None and config.trials is not None
    alpha = config.alpha()
    charfn = _characteristic_function(config, alpha)
    grid = config.grid or (config.window.t0,)

    try:
        quadrature = eta_grid(grid, charfn, config.numerics.quadrature)
    except FeasibilityError as exc:
        LOGGER.warning("density quadrature unavailable: %s", exc)
        quadrature = None

    samples = sample_u0(alpha, config.noise, config.trials, seed, charfn.depth, workers=workers)
    cap = config.noise.density_sup / alpha.alpha0
    rows = []
    for i, t in enumerate(grid):
        histogram = empirical_density(samples, center=t, width=config.numerics.bin_width)
        estimate = histogram.at(t)
        rows.append(
            DosRow(
                t=t,
                eta_quad=quadrature[i].value if quadrature is not None else None,
                eta_quad_error=quadrature[i].error if quadrature is not None else None,
                eta_hist=estimate.value,
                eta_hist_error=estimate.error,
                density_cap=cap,
            )
        )
    return rows


def run_verify(config: ExperimentConfig, seed: int) -> list[VerifyRow]:
    assert config.verify is not None and config.trials is not None
    section = config.verify
    indicator = IndicatorSpec(low=section.low, high=section.high)
    check = verify_conditioning_identity(indicator, section.x, section.z, config.trials, seed)
    oracle = conditioning_oracle(indicator, section.x, section.z)
    spread = check.combined_stderr
    z_score = (check.lhs - check.rhs) / spread if spread > 0 else 0.0
    return [
        VerifyRow(
            low=section.low,
            high=section.high,
            trials=check.trials,
            lhs=check.lhs,
            lhs_stderr=check.lhs_stderr,
            rhs=check.rhs,
            rhs_stderr=check.rhs_stderr,
            oracle=oracle,
            z_score=z_score,
            seed=seed,
        )
    ]


def run(
    config: ExperimentConfig,
    seed: int | None = None,
    workers: int | None = None,
    out: str | Path | None = None,
) -> RunResult:
    """
    Run ``config`` and write its result files.

    Parameters:
        config (ExperimentConfig): Validated experiment.
        seed (int | None): Overrides the seed of the experiment file.
        workers (int | None): Process count; defaults to ``HIERLAP_WORKERS`` or 1.
        out (str | Path | None): Output directory; defaults to the configured results directory.
    """
    seed = config.seed if seed is None else seed
    workers = CFG.workers if workers is None else workers
    if seed < 0:
        raise ConfigError("the seed must be non-negative", field="seed")
    directory = prepare_output_dir(out if out is not None else CFG.results_dir)
    LOGGER.info("running %s experiment with seed %d on %d worker(s)", config.kind, seed, workers)

    rows: Sequence[StrictModel]
    if config.kind == "spectrum":
        rows = run_spectrum(config)
    elif config.kind == "bounds":
        rows = run_bounds(config)
    elif config.kind == "simulate":
        rows = run_simulate(config, seed, workers)
    elif config.kind == "dos":
        rows = run_dos(config, seed, workers)
    else:
        rows = run_verify(config, seed)

    values = [v for row in rows for v in row.model_dump().values()]
    if any(isinstance(v, float) and not math.isfinite(v) for v in values):
        raise FeasibilityError("a result is not finite")
    csv_path, json_path = write_results(config.kind, rows, config.params(), seed, directory)
    return RunResult(
        kind=config.kind, seed=seed, rows=tuple(rows), csv_path=csv_path, json_path=json_path
    )
