"""
Empirical total variation against the theoretical bound, level by level.
"""

import json
import logging
from pathlib import Path
from typing import Any

from src.experiments.schemas import SCHEMA_VERSION, CompareRow
from src.utils.errors import ConfigError

LOGGER = logging.getLogger(__name__)

# parameters that must agree between a simulate run and a bounds run
SHARED_PARAMS = ("model", "alpha_table", "noise", "window")
STDERR_MULTIPLE = 3.0


def load_result(path: str | Path, kind: str) -> dict[str, Any]:
    """Read a JSON result file and check its kind and schema version."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    if not text.strip():
        raise ConfigError(f"{path} is empty")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not a JSON result file: {exc.msg}") from exc
    if not isinstance(document, dict) or document.get("kind") != kind:
        raise ConfigError(f"{path} does not hold {kind} results", field="kind")
    if document.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"{path} has schema version {document.get('schema_version')}, expected {SCHEMA_VERSION}",
            field="schema_version",
        )
    if not document.get("rows"):
        raise ConfigError(f"{path} contains no rows", field="rows")
    return document


def compare(simulate: dict[str, Any], bounds: dict[str, Any]) -> list[CompareRow]:
    """
    Per-level comparison of TV̂ ± stderr with the bound; a level passes when
    TV̂ ≤ bound + 3 stderr. Levels whose bound does not apply carry ``passed`` = None.

    The TV against Poi(λ(ℓ)) from quadrature is used when the simulate run has it, the TV
    against the Monte Carlo mean otherwise.
    """
    for name in SHARED_PARAMS:
        if simulate["params"].get(name) != bounds["params"].get(name):
            raise ConfigError("simulate and bounds runs use different parameters", field=name)

    bound_rows = {row["ell"]: row for row in bounds["rows"]}
    rows = []
    for sim in simulate["rows"]:
        level = sim["ell"]
        if level not in bound_rows:
            LOGGER.warning("level %d has no bound and is skipped", level)
            continue
        bound = bound_rows[level]
        if sim["tv_quad"] is not None:
            tv_hat, stderr = sim["tv_quad"], sim["tv_quad_stderr"]
        else:
            tv_hat, stderr = sim["tv_mc"], sim["tv_mc_stderr"]
        applicable = bool(bound["applicable"])
        passed = tv_hat <= bound["theorem_bound"] + STDERR_MULTIPLE * stderr if applicable else None
        if passed is False:
            LOGGER.warning(
                "level %d: TV %.4g ± %.2g exceeds the bound %.4g",
                level,
                tv_hat,
                stderr,
                bound["theorem_bound"],
            )
        rows.append(
            CompareRow(
                ell=level,
                tv_hat=tv_hat,
                tv_stderr=stderr,
                bound=bound["theorem_bound"],
                applicable=applicable,
                passed=passed,
            )
        )
    if not rows:
        raise ConfigError("the simulate and bounds runs share no window level", field="levels")
    return rows
