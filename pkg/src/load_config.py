import os
from typing import Any

import yaml
from dotenv import load_dotenv
from pyprojroot import here

load_dotenv()

with open(here("configs/config.yml")) as cfg:
    app_config = yaml.load(cfg, Loader=yaml.FullLoader)


class LoadConfig:
    """
    Numerical defaults of the project, read once from ``configs/config.yml``.

    Only numerical knobs live here; scientifically meaningful values (window centre,
    window scale, number of trials) always come from the experiment file.
    """

    def __init__(self, config: dict[str, Any] | None = None) -> None:
        config = app_config if config is None else config

        self.results_dir = here(config["directories"]["results"])

        sampling = config["sampling"]
        self.truncation_tolerance = float(sampling["truncation_tolerance"])
        self.max_depth = int(sampling["max_depth"])
        self.chunk_size = int(sampling["chunk_size"])
        self.progress = bool(sampling["progress"])

        quadrature = config["quadrature"]
        self.points_per_period = int(quadrature["points_per_period"])
        self.max_halvings = int(quadrature["max_halvings"])
        self.convergence_tol = float(quadrature["convergence_tol"])
        self.tail_tol = float(quadrature["tail_tol"])
        self.max_cutoff = float(quadrature["max_cutoff"])
        self.max_product_depth = int(quadrature["max_product_depth"])

        self.kmax_tail = float(config["poisson"]["kmax_tail"])

        self.bin_width_scale = float(config["histogram"]["bin_width_scale"])
        self.min_samples = int(config["histogram"]["min_samples"])

        self.b3_outer = int(config["chen_stein"]["b3_outer"])
        self.b3_inner = int(config["chen_stein"]["b3_inner"])

        workers: str | None = os.getenv("HIERLAP_WORKERS")
        self.workers = int(workers) if workers else 1

        log_level: str | None = os.getenv("HIERLAP_LOG_LEVEL")
        self.log_level = log_level or str(config["logging"]["level"])


CFG = LoadConfig()
