import logging
from collections.abc import Callable, Iterable, Iterator, Sequence
from multiprocessing import Pool
from typing import TypeVar

import numpy as np
from tqdm import tqdm

from src.utils.errors import ConfigError

T = TypeVar("T")
R = TypeVar("R")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# counter words [0, 0, stream, trial]; stream tags below never collide with window levels
DENSITY_STREAM = 2**32 + 1
VERIFY_STREAM = 2**32 + 2
B3_STREAM = 2**32 + 3


def setup_logging(level: str | int = "INFO") -> None:
    """
    Configure the root logger with a single stream handler.

    Parameters:
        level (str | int): Logging level name or number.
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    try:
        root.setLevel(level if isinstance(level, int) else level.upper())
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"unknown logging level {level!r}", field="log_level") from exc


def philox_key(seed: int) -> np.ndarray:
    """128-bit Philox key derived from the experiment seed."""
    return np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)


def trial_generator(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    """
    Counter-based generator owned by one trial.

    The key depends on the seed only; the trial index and the stream tag occupy the two
    high counter words, so streams of distinct (stream, trial) pairs never overlap and a
    trial's draws do not depend on which worker produces them.

    Parameters:
        seed (int): Experiment seed.
        trial (int): Trial index, ``0 <= trial < 2**64``.
        stream (int): Stage tag (window level, density sampling, verification, ...).

    Returns:
        np.random.Generator: Generator positioned at the start of the trial's stream.
    """
    if seed < 0 or trial < 0 or stream < 0:
        raise ValueError("seed, trial and stream must be non-negative")
    counter = np.array([0, 0, stream, trial], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=philox_key(seed)))


def chunk_ranges(total: int, chunk_size: int) -> list[range]:
    """Split ``range(total)`` into consecutive ranges of at most ``chunk_size`` items."""
    if chunk_size <= 0:
        raise ValueError("chunk_size must be positive")
    return [range(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def ordered_map(
    func: Callable[[T], R],
    items: Sequence[T],
    workers: int = 1,
    progress: bool = False,
    desc: str = "trials",
) -> list[R]:
    """
    Map ``func`` over ``items`` keeping input order, optionally on a process pool.

    ``func`` must be picklable (module-level function or ``functools.partial`` of one)
    when ``workers > 1``.
    """
    iterator: Iterable[R]
    if workers <= 1 or len(items) <= 1:
        iterator = map(func, items)
        return list(_progress(iterator, len(items), progress, desc))
    with Pool(processes=workers) as pool:
        iterator = pool.imap(func, items)
        return list(_progress(iterator, len(items), progress, desc))


def _progress(iterator: Iterable[R], total: int, enabled: bool, desc: str) -> Iterator[R]:
    if not enabled:
        yield from iterator
        return
    yield from tqdm(iterator, total=total, desc=desc, ascii=False, ncols=75)
