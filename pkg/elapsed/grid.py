"""Uniform truncated age grid and the densities living on it."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from elapsed.errors import DomainError, MassMismatch
from elapsed.rates import RateModel

logger = logging.getLogger(__name__)

MIN_CELLS = 16


@dataclass(frozen=True)
class Grid:
    """``n`` cells of width ``dx = x_max / n`` with centers ``(i + 1/2) dx``."""

    x_max: float
    n: int

    def __post_init__(self):
        if not self.x_max > 0:
            raise DomainError(f"x_max must be positive, got {self.x_max}")
        if self.n < MIN_CELLS:
            raise DomainError(f"grid needs at least {MIN_CELLS} cells, got {self.n}")

    @property
    def dx(self) -> float:
        return self.x_max / self.n

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dx

    def weight(self, delta: Optional[float]) -> np.ndarray:
        if not delta:
            return np.ones(self.n)
        return np.exp(-delta * self.centers)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.x_max, self.n * factor)

    def required_extent(self, model: RateModel, tol: float = 1e-10) -> float:
        return 4.0 * (2.0 / model.a0) * math.log(1.0 / tol)

    def check_adequacy(self, model: RateModel, tol: float = 1e-10) -> bool:
        """Whether the steady-state tail beyond ``x_max`` is negligible.

        Short grids are allowed for cheap experiments, so this only warns.
        """
        needed = self.required_extent(model, tol)
        bound = truncation_bound(model, self)
        if self.x_max < needed and bound > tol:
            logger.warning(
                "x_max=%g below %g for a0=%g; truncated steady mass up to %.3g",
                self.x_max, needed, model.a0, bound,
            )
            return False
        return True


@dataclass
class DensityState:
    """Cell averages of a density; signed values are allowed for perturbations."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise DomainError(f"density has shape {self.values.shape}, grid has {self.grid.n} cells")

    @classmethod
    def zeros(cls, grid: Grid) -> "DensityState":
        return cls(np.zeros(grid.n), grid)

    @classmethod
    def indicator(cls, grid: Grid, lo: float, hi: float) -> "DensityState":
        """Cell averages of the indicator of [lo, hi]."""
        left = np.clip(grid.edges[:-1], lo, hi)
        right = np.clip(grid.edges[1:], lo, hi)
        return cls((right - left) / grid.dx, grid)

    def __add__(self, other: "DensityState") -> "DensityState":
        return DensityState(self.values + other.values, self.grid)

    def __sub__(self, other: "DensityState") -> "DensityState":
        return DensityState(self.values - other.values, self.grid)

    def __mul__(self, scale: float) -> "DensityState":
        return DensityState(self.values * scale, self.grid)

    __rmul__ = __mul__

    def to_columns(self) -> np.ndarray:
        return np.column_stack([self.grid.centers, self.values])


def mass(f: DensityState) -> float:
    return float(np.sum(f.values) * f.grid.dx)


def l1_norm(f: DensityState, delta: Optional[float] = None) -> float:
    """Sum of ``|f_i| w(x_i) dx`` with the optional weight ``w(y) = exp(-delta y)``."""
    return float(np.sum(np.abs(f.values) * f.grid.weight(delta)) * f.grid.dx)


def w1_flat(f: DensityState, g: DensityState) -> float:
    """Classical one-dimensional W1 distance, the integral of ``|CDF_f - CDF_g|``.

    This dominates the distance built on ``|x - y| ^ 1``, so it is only used
    on the majorant side of inequalities.
    """
    if abs(mass(f) - mass(g)) > 1e-8:
        raise MassMismatch(f"masses differ: {mass(f)!r} vs {mass(g)!r}")
    dx = f.grid.dx
    # CDF difference at the cell edges, linear in between
    diff = np.concatenate([[0.0], np.cumsum(f.values - g.values) * dx])
    return float(np.trapezoid(np.abs(diff), dx=dx))


def truncation_bound(model: RateModel, grid: Grid) -> float:
    """Steady mass beyond ``x_max`` allowed by ``F(x) <= C exp(-a0 x / 2)``."""
    return model.tail_constant() * (2.0 / model.a0) * math.exp(-0.5 * model.a0 * grid.x_max)
