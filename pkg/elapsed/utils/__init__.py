import concurrent.futures
import hashlib
import logging
from typing import Callable, List, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT, force=True)


def config_hash(config) -> str:
    """sha256 of the canonical JSON dump of a config model."""
    return hashlib.sha256(config.model_dump_json().encode()).hexdigest()


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def run_pool(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """Apply ``fn`` to every item on a bounded thread pool; results keep input order.

    The first exception raised by a worker propagates.
    """
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(fn, item) for item in items]
        return [future.result() for future in futures]
