"""Time integration of the nonlinear time elapsed model.

The stepper uses ``dt = dx`` so that transport along characteristics is an
exact one-cell shift. Survival over a step is ``exp(-[A(x + dt) - A(x)])``
at the frozen activity, and the mass that fires is reinjected into the
first cell, which conserves the discrete mass up to rounding.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from elapsed.errors import (
    CFLViolation,
    ContractionViolated,
    DomainError,
    MassNotZero,
    NegativeDensity,
    NoConvergence,
    WindowBelowFloor,
)
from elapsed.grid import DensityState, Grid, l1_norm, mass, w1_flat
from elapsed.rates import DelayKernel, RateModel
from elapsed.steady import SteadyState, steady_profile

logger = logging.getLogger(__name__)

FIXED_POINT_TOL = 1e-14
FIXED_POINT_ACCEPT = 1e-12
MAX_ITER = 200
DAMPING = 0.5
NORM_FLOOR = 1e-13


class HistoryBuffer(deque):
    """Past discharge values, newest first, with the kernel's cell weights.

    ``activity()`` is ``sum_j w_j p(t - (j + 1) dt)``.
    """

    def __init__(self, weights: np.ndarray, start: float = 0.0):
        self.weights = np.asarray(weights, dtype=float)
        super().__init__((start for _ in range(self.weights.size)), maxlen=self.weights.size)

    @classmethod
    def for_kernel(cls, kernel: DelayKernel, dt: float, start: float = 0.0, tol: float = 1e-10) -> "HistoryBuffer":
        depth = kernel.depth(dt, tol)
        return cls(kernel.cell_weights(dt, depth), start)

    @property
    def depth(self) -> int:
        return self.maxlen

    def activity(self) -> float:
        return float(np.dot(self.weights, np.fromiter(self, dtype=float, count=len(self))))

    def push(self, p: float) -> None:
        self.appendleft(p)


@dataclass
class Trajectory:
    t: np.ndarray
    mass: np.ndarray
    p: np.ndarray
    m: np.ndarray
    l1_dist: np.ndarray
    snapshots: Dict[float, np.ndarray] = field(default_factory=dict)

    def to_columns(self) -> np.ndarray:
        return np.column_stack([self.t, self.mass, self.p, self.m, self.l1_dist])

    @property
    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])))


@dataclass
class DecayFit:
    alpha: float
    C: float
    r2: float


def _weighted(f: DensityState) -> Tuple[np.ndarray, np.ndarray]:
    return f.grid.centers, f.values * f.grid.dx


def activity_fixed_point(model: RateModel, eps: float, f: DensityState) -> float:
    """The activity mu* = int a(x, eps mu*) f(x) dx.

    Solved by fixed-point iteration, damped once the iterates start to
    oscillate. At ``eps = 0`` no iteration is needed.
    """
    xs, w = _weighted(f)
    mu = float(np.dot(model.rate(xs, 0.0), w))
    if eps == 0:
        return mu
    lip = eps * model.sup_d_mu()
    if lip >= 1.0:
        raise ContractionViolated(f"eps * |d_mu a| = {lip:.4g} >= 1")

    damped = False
    last_step = 0.0
    for _ in range(MAX_ITER):
        update = float(np.dot(model.rate(xs, eps * mu), w))
        delta = update - mu
        if abs(delta) <= FIXED_POINT_TOL * max(1.0, abs(mu)):
            return update
        if not damped and delta * last_step < 0:
            damped = True
        mu = mu + DAMPING * delta if damped else update
        last_step = delta
    if abs(delta) <= FIXED_POINT_ACCEPT:
        logger.debug("fixed point stalled at |step|=%.3g", abs(delta))
        return mu
    raise NoConvergence(f"activity fixed point did not converge in {MAX_ITER} iterations")


def activity_bisection(model: RateModel, eps: float, f: DensityState) -> float:
    """Root of ``int a(x, eps mu) f dx - mu`` on [0, a1 mass(f)] by bisection."""
    xs, w = _weighted(f)
    hi = model.a1 * max(float(w.sum()), 0.0) + 1e-12
    return float(optimize.bisect(lambda mu: float(np.dot(model.rate(xs, eps * mu), w)) - mu, 0.0, hi, xtol=1e-15))


def lipschitz_sides(model: RateModel, eps: float, f: DensityState, g: DensityState) -> Tuple[float, float]:
    """Both sides of ``|phi[f] - phi[g]| (1 - eps |d_mu a|) <= |a|_W1inf W1(f, g)``."""
    lhs = abs(activity_fixed_point(model, eps, f) - activity_fixed_point(model, eps, g))
    lhs *= 1.0 - eps * model.sup_d_mu()
    return lhs, model.w1inf_norm() * w1_flat(f, g)


def shift_and_fire(model: RateModel, values: np.ndarray, mu: float, grid: Grid) -> np.ndarray:
    """One exact transport step with survival at frozen activity ``mu``.

    The last cell has no outflow and keeps its survivors.
    """
    xs = grid.centers
    jump = model.primitive(xs, mu) - model.primitive(xs + grid.dx, mu)
    kept = values * np.exp(jump)
    fired = values * -np.expm1(jump)
    out = np.empty_like(values)
    out[1:] = kept[:-1]
    out[-1] += kept[-1]
    out[0] = fired.sum()
    return out


def step(
    model: RateModel,
    kernel: Optional[DelayKernel],
    eps: float,
    f: DensityState,
    history: Optional[HistoryBuffer],
    dt: float,
) -> Tuple[DensityState, float, float]:
    """Advance ``f`` by ``dt``; returns the new density, the discharge p and the activity m."""
    grid = f.grid
    if not math.isclose(dt, grid.dx, rel_tol=1e-12):
        raise CFLViolation(f"dt={dt} must equal dx={grid.dx}")
    if kernel is not None and kernel.is_density and history is None:
        raise DomainError(f"{kernel.kind} delay needs a history buffer")
    if kernel is None or not kernel.is_density:
        p = m = activity_fixed_point(model, eps, f)
    else:
        m = history.activity()
        xs, w = _weighted(f)
        p = float(np.dot(model.rate(xs, eps * m), w))
        history.push(p)
    values = shift_and_fire(model, f.values, eps * m, grid)
    if np.any(values < 0):
        raise NegativeDensity(f"negative density {values.min():.3g} after step")
    return DensityState(values, grid), p, m


def _initial_activity(model: RateModel, eps: float, f: DensityState) -> float:
    try:
        return activity_fixed_point(model, eps, f)
    except ContractionViolated:
        logger.warning("no contraction at eps=%g; history starts from the uncoupled activity", eps)
        return activity_fixed_point(model, 0.0, f)


def simulate(
    model: RateModel,
    kernel: Optional[DelayKernel],
    eps: float,
    f0: DensityState,
    t_final: float,
    reference: Optional[DensityState] = None,
    record_every: int = 1,
    snapshot_every: int = 0,
) -> Trajectory:
    """Run :func:`step` up to ``t_final`` and record diagnostics.

    With a density kernel the history is pre-filled with the initial
    discharge p(0).
    """
    grid = f0.grid
    dt = grid.dx
    n_steps = int(round(t_final / dt))
    if n_steps < 1:
        raise DomainError(f"t_final={t_final} is shorter than one step dt={dt}")
    history = None
    if kernel is not None and kernel.is_density:
        history = HistoryBuffer.for_kernel(kernel, dt, _initial_activity(model, eps, f0))
        logger.debug("history depth %d for %s", history.depth, kernel.kind)

    rows = []
    snapshots: Dict[float, np.ndarray] = {}
    f = f0
    for k in range(n_steps + 1):
        t = k * dt
        f_next, p, m = step(model, kernel, eps, f, history, dt)
        if k % record_every == 0:
            dist = l1_norm(f - reference) if reference is not None else math.nan
            rows.append((t, mass(f), p, m, dist))
        if snapshot_every and k % snapshot_every == 0:
            snapshots[round(t, 12)] = f.values.copy()
        f = f_next

    table = np.array(rows)
    traj = Trajectory(table[:, 0], table[:, 1], table[:, 2], table[:, 3], table[:, 4], snapshots)
    logger.debug("simulated %d steps, mass drift %.3g", n_steps, traj.mass_drift)
    return traj


def sup_distance(a: Trajectory, b: Trajectory, grid: Grid) -> float:
    """Largest L1 distance over the snapshot times both trajectories share."""
    common = sorted(set(a.snapshots) & set(b.snapshots))
    if not common:
        raise DomainError("trajectories share no snapshot times")
    return max(l1_norm(DensityState(a.snapshots[t] - b.snapshots[t], grid)) for t in common)


def discrete_steady(model: RateModel, eps: float, grid: Grid, guess: float) -> SteadyState:
    """Steady profile whose activity is the stepper's own fixed point.

    The grid profile at M is a fixed point of :func:`shift_and_fire`, and
    here M also solves ``M = sum a(x_i, eps M) F_i dx`` exactly, so the
    nonlinear stepper leaves the returned state unchanged.
    """
    xs = grid.centers

    def gap(mu: float) -> float:
        F = steady_profile(model, eps, mu, grid)
        return float(np.dot(model.rate(xs, eps * mu), F.values)) * grid.dx - mu

    lo, hi = 0.5 * guess, min(2.0 * guess, 2.0 * model.a1) + 1e-12
    M = float(optimize.brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    F = steady_profile(model, eps, M, grid)
    return SteadyState(F=F, M=M, eps=eps, residual=abs(gap(M)), Tm=F.values[0] * math.exp(float(model.primitive(xs[0], eps * M))))


def initial_density(
    grid: Grid,
    steady: Optional[DensityState],
    kind: str,
    amplitude: float = 0.0,
    shape: str = "sine",
    width: float = 1.0,
) -> DensityState:
    """Initial data: the steady profile, a perturbation of it, or a uniform block."""
    xs = grid.centers
    if kind == "uniform":
        return DensityState.indicator(grid, 0.0, width) * (1.0 / width)
    if steady is None:
        raise DomainError(f"initial condition {kind!r} needs a steady profile")
    F = steady.values
    if kind == "steady" or amplitude == 0.0:
        return DensityState(F.copy(), grid)
    if kind != "perturbed":
        raise DomainError(f"unknown initial condition {kind!r}")
    if shape == "sine":
        values = F * (1.0 + amplitude * np.sin(xs))
    elif shape == "bump":
        bump = stats.norm.pdf(xs, loc=2.0, scale=0.5)
        values = F + amplitude * bump
    elif shape == "shift":
        values = np.interp(xs - amplitude, xs, F, left=F[0])
    else:
        raise DomainError(f"unknown perturbation shape {shape!r}")
    values = np.clip(values, 0.0, None)
    return DensityState(values / (values.sum() * grid.dx), grid)


def fit_decay(times: Sequence[float], norms: Sequence[float], window: Tuple[float, float]) -> DecayFit:
    """Least-squares line through ``(t, log norm)`` on the window."""
    t1, t2 = window
    if not t2 > t1:
        raise DomainError(f"empty fit window {window}")
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    sel = (times >= t1 - 1e-12) & (times <= t2 + 1e-12)
    if sel.sum() < 2:
        raise DomainError(f"fewer than two samples in window {window}")
    if not np.all(np.isfinite(norms[sel])):
        raise DomainError("norms in the fit window are not finite; simulate with a reference to record distances")
    if np.any(norms[sel] <= NORM_FLOOR):
        raise WindowBelowFloor(f"norm falls below {NORM_FLOOR} inside window {window}")
    fit = stats.linregress(times[sel], np.log(norms[sel]))
    return DecayFit(alpha=float(fit.slope), C=float(math.exp(fit.intercept)), r2=float(fit.rvalue**2))


def fit_decay_rate(traj: Trajectory, window: Tuple[float, float]) -> DecayFit:
    return fit_decay(traj.t, traj.l1_dist, window)


def nonlinear_rhs(model: RateModel, eps: float, values: np.ndarray, grid: Grid) -> np.ndarray:
    """Semidiscrete right-hand side with the discharge as a source in the first cell."""
    f = DensityState(values, grid)
    p = activity_fixed_point(model, eps, f)
    flux = values / grid.dx
    out = -flux
    out[1:] += flux[:-1]
    out[-1] += flux[-1]
    out -= model.rate(grid.centers, eps * p) * values
    out[0] += p / grid.dx
    return out


def remainder(model: RateModel, eps: float, steady: SteadyState, g: DensityState) -> np.ndarray:
    """``Z[g] = N(F + g) - N(F) - Lambda g`` with Lambda linearized at F."""
    from elapsed.spectrum import assemble_nodelay

    if abs(mass(g)) > 1e-10:
        raise MassNotZero(f"perturbation has mass {mass(g):.3g}")
    F = steady.F.values
    if np.any(F + g.values < -1e-14):
        raise DomainError("F + g must stay nonnegative")
    grid = steady.grid
    mu = activity_fixed_point(model, eps, steady.F)
    generator = assemble_nodelay(model, eps, steady, grid, activity=mu)
    return (
        nonlinear_rhs(model, eps, F + g.values, grid)
        - nonlinear_rhs(model, eps, F, grid)
        - generator.matrix @ g.values
    )


def nonlinear_residual(model: RateModel, eps: float, steady: SteadyState, g: DensityState) -> float:
    """L1 norm of the quadratic remainder Z[g]."""
    Z = remainder(model, eps, steady, g)
    drift = float(Z.sum() * steady.grid.dx)
    if abs(drift) > 1e-10:
        logger.warning("remainder carries mass %.3g", drift)
    return l1_norm(DensityState(Z, steady.grid))


def gronwall_bound(t, a: float, C1: float, C2: float, u0: float):
    """Majorant ``(1 + C1 u0 C2 / |a + 2 C2 u0|) C1 e^{a t} u0``.

    Valid for ``u(t) <= C1 e^{at} u0 + C2 int_0^t e^{a(t-s)} u(s)^2 ds``
    under the smallness condition ``a + 2 C2 u0 < 0``.
    """
    rate = a + 2.0 * C2 * u0
    if not rate < 0:
        raise DomainError(f"smallness condition fails: a + 2 C2 u0 = {rate:.4g}")
    return (1.0 + C1 * u0 * C2 / abs(rate)) * C1 * np.exp(a * np.asarray(t, dtype=float)) * u0


@dataclass
class GronwallConstants:
    """Constants of ``u(t) <= C1 e^{at} u0 + C2 int_0^t e^{a(t-s)} u(s)^2 ds``."""

    a: float
    C1: float
    C2: float
    K: float


def gronwall_constants(
    model: RateModel,
    eps: float,
    steady: SteadyState,
    rng: np.random.Generator,
    horizon: float,
    dt: float = 0.25,
    relax: float = 0.75,
    n_samples: int = 12,
    size: float = 0.1,
) -> GronwallConstants:
    """Measure the constants for perturbations of ``steady``.

    ``a`` is ``relax`` times the spectral gap, ``C1`` bounds the linearized
    flow on mass-zero data over ``[0, horizon]``, and ``C2 = C1 K`` with
    ``K`` the largest ratio ``|Z[g]| / |g|^2`` over random smooth and rough
    mass-zero perturbations.
    """
    from elapsed.spectrum import assemble_nodelay, linear_flow_constant, spectrum_report

    mat = assemble_nodelay(model, eps, steady)
    gap = spectrum_report(mat).gap
    if not gap < 0:
        raise DomainError(f"no spectral gap at eps={eps}: gap={gap:.4g}")
    a = relax * gap
    C1 = linear_flow_constant(mat, steady.F.values, a, horizon, dt)

    F = steady.F.values
    xs = steady.grid.centers
    K = 0.0
    for k in range(n_samples):
        if k % 2:
            r = rng.uniform(-1.0, 1.0, F.size)
        else:
            r = np.sin(rng.uniform(0.25, 2.0) * xs + rng.uniform(0.0, 2.0 * math.pi))
        g = DensityState(size * F * (r - np.dot(F, r) / F.sum()), steady.grid)
        norm = l1_norm(g)
        if norm > 0:
            K = max(K, nonlinear_residual(model, eps, steady, g) / norm**2)
    logger.debug("gronwall constants eps=%g: a=%.4g C1=%.4g K=%.4g", eps, a, C1, K)
    return GronwallConstants(a=a, C1=C1, C2=C1 * K, K=K)


def gronwall_envelope(times, norms, a: float, C1: float, C2: float) -> Tuple[np.ndarray, bool]:
    """Bound a measured norm curve with :func:`gronwall_bound` from its first sample.

    The constants come from outside the curve; returns the bound and whether
    it majorizes every sample.
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    bound = gronwall_bound(times - times[0], a, C1, C2, float(norms[0]))
    return bound, bool(np.all(norms <= bound * (1.0 + 1e-12)))
