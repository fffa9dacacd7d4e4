"""Normalized steady states (F_eps, M_eps) of the time elapsed model.

A steady state has the profile ``F(x) = T exp(-A(x, eps M))`` and its
activity is a root of ``Phi(eps, M) = M int_0^inf exp(-A(x, eps M)) dx = 1``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from numpy.polynomial import legendre
from scipy import optimize

from elapsed.errors import DomainError, NoConvergence, NoRootFound, QuadratureUnderflow, ScanTooCoarseWarning
from elapsed.grid import DensityState, Grid, mass
from elapsed.rates import Constant, RateModel, StepThreshold

logger = logging.getLogger(__name__)

GAUSS_NODES = 8
ROOT_TOL = 1e-12
MIN_SCAN = 64
SCAN_CHUNK = 128


@dataclass
class SteadyState:
    F: DensityState
    M: float
    eps: float
    residual: float
    Tm: float
    margin: Optional[float] = None

    @property
    def grid(self) -> Grid:
        return self.F.grid


def _survival_integral(model: RateModel, mu: np.ndarray, grid: Grid) -> np.ndarray:
    """``int_0^inf exp(-A(x, mu)) dx`` for each activity level in ``mu``."""
    if isinstance(model, Constant):
        return np.full(mu.shape, 1.0 / model.a)
    if isinstance(model, StepThreshold):
        return model.threshold(mu) + 1.0
    nodes, weights = legendre.leggauss(GAUSS_NODES)
    half = 0.5 * grid.dx
    xs = (grid.centers[:, None] + half * nodes[None, :]).ravel()
    ws = np.tile(half * weights, grid.n)
    body = np.empty_like(mu)
    for start in range(0, mu.size, SCAN_CHUNK):
        chunk = mu[start:start + SCAN_CHUNK, None]
        body[start:start + SCAN_CHUNK] = np.exp(-model.primitive(xs[None, :], chunk)) @ ws
    end = np.full_like(mu, grid.x_max)
    tail = np.exp(-model.primitive(end, mu)) / model.rate(end, mu)
    return body + tail


def phi(model: RateModel, eps: float, m, grid: Grid):
    """Phi(eps, m); vectorised over ``m``, with Phi(eps, 0) = 0 exactly."""
    m_arr = np.atleast_1d(np.asarray(m, dtype=float))
    if np.any(m_arr < 0) or eps < 0:
        raise DomainError("activity and connectivity must be nonnegative")
    out = m_arr * _survival_integral(model, eps * m_arr, grid)
    return out if np.ndim(m) else float(out[0])


def steady_profile(model: RateModel, eps: float, m: float, grid: Grid) -> DensityState:
    """Profile ``T_m exp(-A(x_i, eps m))`` normalized to unit discrete mass."""
    if m < 0 or eps < 0:
        raise DomainError("activity and connectivity must be nonnegative")
    survival = np.exp(-model.primitive(grid.centers, eps * m))
    total = survival.sum() * grid.dx
    if not total > 0:
        raise QuadratureUnderflow(f"exp(-A) underflows on the whole grid for m={m}")
    return DensityState(survival / total, grid)


def _build_state(model: RateModel, eps: float, root: float, grid: Grid) -> SteadyState:
    residual = abs(phi(model, eps, root, grid) - 1.0)
    if residual > ROOT_TOL:
        raise NoConvergence(f"bisection stopped at |Phi-1|={residual:.3g} for eps={eps}")
    F = steady_profile(model, eps, root, grid)
    Tm = 1.0 / float(_survival_integral(model, np.array([eps * root]), grid)[0])
    return SteadyState(F=F, M=root, eps=eps, residual=residual, Tm=Tm)


def solve_steady(
    model: RateModel,
    eps: float,
    grid: Grid,
    m_max: Optional[float] = None,
    n_scan: int = 4096,
) -> List[SteadyState]:
    """All steady states found by a sign-change scan of Phi - 1 on [0, m_max].

    Any fixed point satisfies ``M = <a F> <= a1``, so ``m_max`` defaults to
    ``2 a1``.
    """
    m_max = 2.0 * model.a1 if m_max is None else m_max
    if m_max < model.a1:
        raise DomainError(f"m_max={m_max} below a1={model.a1} may miss roots")
    if n_scan < MIN_SCAN:
        raise DomainError(f"n_scan must be at least {MIN_SCAN}")

    ms = np.linspace(0.0, m_max, n_scan + 1)
    vals = phi(model, eps, ms, grid) - 1.0

    def residual(m: float) -> float:
        return phi(model, eps, m, grid) - 1.0

    brackets = []
    for k in range(n_scan):
        if vals[k] == 0.0:
            brackets.append((ms[k], ms[k]))
        elif vals[k] * vals[k + 1] < 0.0:
            brackets.append((ms[k], ms[k + 1]))
    if vals[-1] == 0.0:
        brackets.append((ms[-1], ms[-1]))
    if not brackets:
        raise NoRootFound(f"Phi(eps={eps}, m) - 1 has no sign change on [0, {m_max}]")

    starts = [lo for lo, _ in brackets]
    if np.any(np.diff(starts) <= (ms[1] - ms[0]) * 1.000001):
        warnings.warn(
            f"roots within one scan cell at eps={eps}; increase n_scan", ScanTooCoarseWarning, stacklevel=2
        )

    states = []
    for lo, hi in brackets:
        root = lo if lo == hi else optimize.bisect(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        states.append(_build_state(model, eps, float(root), grid))
    logger.debug("eps=%g: %d root(s) %s", eps, len(states), [s.M for s in states])
    return states


def central_slope(fn: Callable[[float], float], m: float, h: Optional[float] = None) -> float:
    """Central difference of ``fn`` at ``m``, one-sided when ``m < h``."""
    h = 1e-5 * max(1.0, abs(m)) if h is None else h
    if m < h:
        return (fn(m + h) - fn(m)) / h
    return (fn(m + h) - fn(m - h)) / (2.0 * h)


def uniqueness_margin(model: RateModel, eps: float, M: float, grid: Grid) -> float:
    """dPhi/dm at a root; a positive value certifies a nondegenerate root."""
    return central_slope(lambda m: phi(model, eps, m, grid), M)


def is_degenerate(margin: float, tol: float = 1e-6) -> bool:
    return abs(margin) <= tol


def steady_consistency(state: SteadyState, model: RateModel) -> dict:
    """Normalization and boundary checks of a computed steady state."""
    grid = state.grid
    return {
        "mass_error": abs(mass(state.F) - 1.0),
        "boundary_error": abs(state.F.values[0] - state.M),
        "boundary_tol": model.a1 * state.M * grid.dx,
        "residual": state.residual,
    }
