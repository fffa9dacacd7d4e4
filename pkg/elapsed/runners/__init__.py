"""Experiment runners, one module per subcommand.

Every runner exposes ``name``, ``description`` and ``run(config, store)``; ``run``
writes its outputs through the store and returns the pass/fail table of the
invariant checks it re-validated on them.
"""
import logging
from typing import Optional

from elapsed.grid import Grid
from elapsed.models import ExperimentConfig
from elapsed.rates import DelayKernel, RateModel
from elapsed.spectrum import GeneratorMatrix, assemble_delay, assemble_nodelay
from elapsed.steady import SteadyState, solve_steady

logger = logging.getLogger(__name__)


def build_kernel(config: ExperimentConfig) -> Optional[DelayKernel]:
    kernel = config.delay.build()
    return kernel if kernel.is_density else None


def primary_steady(model: RateModel, eps: float, grid: Grid, config: ExperimentConfig) -> SteadyState:
    """The lowest-activity steady state at ``eps``."""
    states = solve_steady(model, eps, grid, config.scan.m_max, config.scan.n_scan)
    if len(states) > 1:
        logger.warning("eps=%g has %d steady states; using M=%.6g", eps, len(states), states[0].M)
    return states[0]


def generator_for(
    model: RateModel,
    kernel: Optional[DelayKernel],
    eps: float,
    steady: SteadyState,
) -> GeneratorMatrix:
    if kernel is None:
        return assemble_nodelay(model, eps, steady)
    return assemble_delay(model, kernel, eps, steady)


def eps_tag(index: int) -> str:
    return f"eps_{index:03d}"
