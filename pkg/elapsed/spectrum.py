"""Dense discretizations of the linearized generators and their spectra.

Without delay the generator acts on perturbations g of the age density;
with a delay density it acts on pairs (g, v) where v carries the history of
discharge perturbations. The boundary condition is realized as a source
``e0 / dx`` in the first cell, which keeps the conserved functional
``sum_i g_i dx`` exactly in the left kernel.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import directed_hausdorff

from elapsed.dynamics import DecayFit, fit_decay
from elapsed.errors import DomainError, EigensolverFailure, KappaGeqOne, KernelNotDensity, MassNotZero
from elapsed.grid import Grid
from elapsed.rates import DelayKernel, RateModel
from elapsed.steady import SteadyState

logger = logging.getLogger(__name__)

MAX_DIMENSION = 6000
KATO_TIMES = (0.1, 1.0, 10.0)


@dataclass
class GeneratorMatrix:
    matrix: np.ndarray
    A_mat: np.ndarray
    B_mat: np.ndarray
    eps: float
    model: str
    grid: Grid
    a0: float
    kappa: float
    essential: float
    kernel: Optional[str] = None
    grid_v: Optional[Grid] = None
    delta: Optional[float] = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_delay(self) -> bool:
        return self.grid_v is not None

    @property
    def a_star(self) -> float:
        return -0.5 * self.a0

    @property
    def a_sharp(self) -> float:
        return max(self.a_star, -self.delta) if self.is_delay else self.a_star

    def conserved(self) -> np.ndarray:
        """The functional (1, 0): mass of the g-component."""
        out = np.zeros(self.dim)
        out[: self.grid.n] = self.grid.dx
        return out

    def similarity(self) -> np.ndarray:
        """Diagonal of the change of variables to the weighted space (1 on g, omega on v)."""
        scale = np.ones(self.dim)
        if self.is_delay:
            scale[self.grid.n:] = self.grid_v.weight(self.delta)
        return scale

    def spectral_matrix(self) -> np.ndarray:
        if not self.is_delay:
            return self.matrix
        s = self.similarity()
        return s[:, None] * self.matrix / s[None, :]

    def norm(self, vec: np.ndarray) -> float:
        """L1 norm of g plus the omega-weighted L1 norm of v."""
        n = self.grid.n
        total = float(np.sum(np.abs(vec[:n])) * self.grid.dx)
        if self.is_delay:
            total += float(np.sum(np.abs(vec[n:]) * self.grid_v.weight(self.delta)) * self.grid_v.dx)
        return total


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    gap: float
    cut: float
    zero_eig: complex
    zero_vector: np.ndarray
    zero_residual: float
    n_dominant: int
    positive: bool
    cut_misuse: bool
    a_star: float
    a_sharp: float
    dimension: int

    def summary(self) -> Dict[str, object]:
        return {
            "gap": self.gap,
            "cut": self.cut,
            "zero_eig": [self.zero_eig.real, self.zero_eig.imag],
            "zero_residual": self.zero_residual,
            "n_dominant": self.n_dominant,
            "positive": self.positive,
            "cut_misuse": self.cut_misuse,
            "a_star": self.a_star,
            "a_sharp": self.a_sharp,
            "dimension": self.dimension,
        }


def upwind_matrix(n: int, dx: float, outflow: bool = False) -> np.ndarray:
    """First-order upwind ``-d/dx`` with zero inflow.

    Without outflow the last cell keeps what it receives, so columns sum to 0.
    """
    T = np.diag(np.full(n, -1.0 / dx)) + np.diag(np.full(n - 1, 1.0 / dx), k=-1)
    if not outflow:
        T[-1, -1] = 0.0
    return T


def _linear_coefficients(model: RateModel, eps: float, grid: Grid, mu: float) -> Tuple[np.ndarray, np.ndarray]:
    xs = grid.centers
    a = np.broadcast_to(model.rate(xs, eps * mu), xs.shape).astype(float)
    if eps == 0:
        return a, np.zeros_like(xs)
    return a, eps * np.broadcast_to(model.d_mu(xs, eps * mu), xs.shape)


def assemble_nodelay(
    model: RateModel,
    eps: float,
    steady: SteadyState,
    grid: Optional[Grid] = None,
    activity: Optional[float] = None,
) -> GeneratorMatrix:
    """Linearized generator around ``steady`` without delay.

    ``B = T - diag(a_eps)`` and ``A = gamma M_row`` with
    ``gamma = e0/dx - a'_eps F`` and ``M_row = a_eps dx / (1 - kappa)``.
    ``activity`` overrides the steady activity used to evaluate the rates.
    """
    grid = grid or steady.grid
    mu = steady.M if activity is None else activity
    a, da = _linear_coefficients(model, eps, grid, mu)
    F = steady.F.values
    dx = grid.dx

    kappa = float(np.dot(da, F) * dx)
    if kappa >= 1.0:
        raise KappaGeqOne(f"kappa={kappa:.4g} at eps={eps}")
    M_row = a * dx / (1.0 - kappa)
    gamma = -da * F
    gamma[0] += 1.0 / dx

    B = upwind_matrix(grid.n, dx) - np.diag(a)
    A = np.outer(gamma, M_row)
    logger.debug("assembled no-delay generator n=%d eps=%g kappa=%.3g", grid.n, eps, kappa)
    return GeneratorMatrix(
        matrix=A + B,
        A_mat=A,
        B_mat=B,
        eps=eps,
        model=model.kind,
        grid=grid,
        a0=model.a0,
        kappa=kappa,
        essential=-float(a[-1]),
    )


def delay_grid(kernel: DelayKernel, grid: Grid, tol: float = 1e-10) -> Grid:
    """History grid with the age step, long enough to hold the kernel."""
    n_v = max(kernel.depth(grid.dx, tol), 16)
    return Grid(n_v * grid.dx, n_v)


def assemble_delay(
    model: RateModel,
    kernel: DelayKernel,
    eps: float,
    steady: SteadyState,
    grid_g: Optional[Grid] = None,
    grid_v: Optional[Grid] = None,
) -> GeneratorMatrix:
    """Block generator on (g, v) for a delay density.

    The discharge perturbation is ``O[g, v] = N[g] + kappa D[v]`` with
    ``N[g] = sum a_eps g dx`` and ``D[v] = sum w_j v_j``; it is injected at
    the boundary of both blocks.
    """
    if not kernel.is_density:
        raise KernelNotDensity("delay block needs a density kernel; use assemble_nodelay for Dirac")
    grid_g = grid_g or steady.grid
    grid_v = grid_v or delay_grid(kernel, grid_g)
    if not math.isclose(grid_v.dx, grid_g.dx, rel_tol=1e-12):
        raise DomainError("history grid must share the age step")
    n, nv = grid_g.n, grid_v.n
    dx, dy = grid_g.dx, grid_v.dx

    a, da = _linear_coefficients(model, eps, grid_g, steady.M)
    F = steady.F.values
    kappa = float(np.dot(da, F) * dx)
    if kappa >= 1.0:
        raise KappaGeqOne(f"kappa={kappa:.4g} at eps={eps}")
    D_row = kernel.cell_weights(dy, nv)
    N_row = a * dx

    e_g = np.zeros(n)
    e_g[0] = 1.0 / dx
    e_v = np.zeros(nv)
    e_v[0] = 1.0 / dy

    B_gg = upwind_matrix(n, dx) - np.diag(a)
    B_vv = upwind_matrix(nv, dy, outflow=True)
    A_gg = np.outer(e_g, N_row)
    A_gv = np.outer(-da * F + kappa * e_g, D_row)
    A_vg = np.outer(e_v, N_row)
    A_vv = np.outer(e_v, kappa * D_row)

    B = linalg.block_diag(B_gg, B_vv)
    A = np.block([[A_gg, A_gv], [A_vg, A_vv]])
    logger.debug("assembled delay generator n=%d+%d eps=%g kappa=%.3g", n, nv, eps, kappa)
    return GeneratorMatrix(
        matrix=A + B,
        A_mat=A,
        B_mat=B,
        eps=eps,
        model=model.kind,
        grid=grid_g,
        a0=model.a0,
        kappa=kappa,
        essential=-float(a[-1]),
        kernel=kernel.kind,
        grid_v=grid_v,
        delta=kernel.delta,
    )


def essential_abscissa(mat: GeneratorMatrix) -> float:
    """Default half-plane cut: -a_eps(x_last), or max(-a_eps(x_last), -delta) with delay."""
    if mat.is_delay:
        return max(mat.essential, -mat.delta)
    return mat.essential


def spectrum_report(mat: GeneratorMatrix, halfplane_cut: Optional[float] = None) -> SpectrumReport:
    """Dense eigendecomposition and the dominant part of the spectrum.

    The gap is the largest real part above the cut other than the zero
    eigenvalue, or the cut itself when nothing else lies above it. The cut
    defaults to the essential abscissa of the generator.
    """
    if mat.dim > MAX_DIMENSION:
        raise DomainError(f"dimension {mat.dim} exceeds the dense limit {MAX_DIMENSION}")
    cut = essential_abscissa(mat) if halfplane_cut is None else halfplane_cut
    S = mat.spectral_matrix()
    try:
        vals, vecs = np.linalg.eig(S)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(vals)):
        raise EigensolverFailure("eigensolver returned non-finite eigenvalues")

    order = np.argsort(-vals.real, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    iz = int(np.argmin(np.abs(vals)))
    zero = complex(vals[iz])
    vec = vecs[:, iz] / mat.similarity()
    residual = float(np.linalg.norm(mat.matrix @ vec - zero * vec) / np.linalg.norm(vec))

    g = vec[: mat.grid.n]
    total = g.sum() * mat.grid.dx
    g = (g / total).real if abs(total) > 0 else g.real
    positive = bool(np.min(g) >= -1e-12 * np.max(np.abs(g)))

    above = vals.real > cut
    others = np.delete(vals.real, iz)
    isolated = others[others > cut]
    gap = float(isolated.max()) if isolated.size else float(cut)
    misuse = cut >= 0.0
    if misuse:
        logger.warning("half-plane cut %.3g is not negative; no dominant eigenvalue can be isolated", cut)
    return SpectrumReport(
        eigenvalues=vals,
        gap=gap,
        cut=float(cut),
        zero_eig=zero,
        zero_vector=g,
        zero_residual=residual,
        n_dominant=int(above.sum()),
        positive=positive,
        cut_misuse=misuse,
        a_star=mat.a_star,
        a_sharp=mat.a_sharp,
        dimension=mat.dim,
    )


def hausdorff_distance(u: Sequence[complex], v: Sequence[complex]) -> float:
    """Hausdorff distance between two finite sets in the complex plane."""
    pu = np.column_stack([np.real(u), np.imag(u)])
    pv = np.column_stack([np.real(v), np.imag(v)])
    if len(pu) == 0 or len(pv) == 0:
        return 0.0 if len(pu) == len(pv) else math.inf
    return max(directed_hausdorff(pu, pv)[0], directed_hausdorff(pv, pu)[0])


def dominant_distance(u: Sequence[complex], v: Sequence[complex], level: float) -> float:
    """Largest distance from an eigenvalue of either set with real part above ``level`` to the other set.

    Eigenvalues close to ``level`` are compared against the whole other set,
    so one crossing the level does not count as missing.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    worst = 0.0
    for top, full in ((u[u.real > level], v), (v[v.real > level], u)):
        if top.size == 0:
            continue
        if full.size == 0:
            return math.inf
        pt = np.column_stack([top.real, top.imag])
        pf = np.column_stack([full.real, full.imag])
        worst = max(worst, directed_hausdorff(pt, pf)[0])
    return float(worst)


def match_eigenvalues(prev: Sequence[complex], cur: Sequence[complex]) -> Tuple[List[Tuple[int, int]], float]:
    """Nearest-neighbour pairing of two eigenvalue lists; returns pairs and the largest move."""
    prev = np.asarray(prev, dtype=complex)
    cur = np.asarray(cur, dtype=complex)
    cost = np.abs(prev[:, None] - cur[None, :])
    rows, cols = linear_sum_assignment(cost)
    moves = cost[rows, cols]
    return list(zip(rows.tolist(), cols.tolist())), float(moves.max()) if moves.size else 0.0


@dataclass
class SemigroupDecay:
    times: np.ndarray
    norms: np.ndarray
    fit: Optional[DecayFit]


def semigroup_decay(mat: GeneratorMatrix, g0: np.ndarray, T: float, dt: float) -> SemigroupDecay:
    """Backward Euler trajectory of ``d zeta/dt = Lambda zeta`` and its decay rate.

    The rate is fitted on the second half of the run, above the norm floor.
    """
    g0 = np.asarray(g0, dtype=float)
    pairing = float(mat.conserved() @ g0)
    if abs(pairing) > 1e-10 * max(1.0, mat.norm(g0)):
        raise MassNotZero(f"initial perturbation pairs to {pairing:.3g} with the conserved functional")
    n_steps = int(round(T / dt))
    times = dt * np.arange(n_steps + 1)
    norms = np.empty(n_steps + 1)
    lu = linalg.lu_factor(np.eye(mat.dim) - dt * mat.matrix)
    zeta = g0.copy()
    norms[0] = mat.norm(zeta)
    for k in range(1, n_steps + 1):
        zeta = linalg.lu_solve(lu, zeta)
        norms[k] = mat.norm(zeta)

    fit = None
    sel = (times >= 0.5 * T) & (norms > 1e-13)
    if sel.sum() >= 2:
        fit = fit_decay(times[sel], norms[sel], (float(times[sel][0]), float(times[sel][-1])))
    return SemigroupDecay(times, norms, fit)


def linear_flow_constant(mat: GeneratorMatrix, F: np.ndarray, a: float, T: float, dt: float) -> float:
    """Smallest C1 with ``|e^{t Lambda} g| <= C1 e^{a t} |g|`` for mass-zero g, sampled on [0, T].

    ``P = I - F (dx 1)^T`` maps onto the mass-zero subspace and fixes it, so
    the bound is the largest L1 column norm of ``e^{t Lambda} P``.
    """
    if mat.is_delay:
        raise DomainError("the flow constant is defined on the age block only")
    F = np.asarray(F, dtype=float)
    if not math.isclose(float(mat.conserved() @ F), 1.0, rel_tol=1e-10):
        raise DomainError("F must carry unit mass")
    step_map = linalg.expm(dt * mat.matrix)
    flow = np.eye(mat.dim) - np.outer(F, mat.conserved())
    C1 = float(np.abs(flow).sum(axis=0).max())
    for k in range(1, int(round(T / dt)) + 1):
        flow = step_map @ flow
        C1 = max(C1, float(np.abs(flow).sum(axis=0).max()) * math.exp(-a * k * dt))
    logger.debug("linear flow constant %.4g at rate %.4g over T=%g", C1, a, T)
    return C1


@dataclass
class KatoReport:
    metzler: bool
    positive: bool
    worst_offdiag: float
    worst_entry: float
    basis_size: int = 0
    times: Tuple[float, ...] = field(default=KATO_TIMES)

    @property
    def passes(self) -> bool:
        return self.metzler and self.positive


def kato_positivity_check(mat: GeneratorMatrix, times: Sequence[float] = KATO_TIMES, substeps: int = 20) -> KatoReport:
    """Sign pattern of the generator and positivity of its semigroup on every indicator vector.

    The semigroup is approximated by ``substeps`` backward Euler steps per
    time. Applied to the identity, the columns of the result are the images
    of the whole indicator basis.
    """
    M = mat.matrix
    off = M - np.diag(np.diag(M))
    scale = np.max(np.abs(M))
    worst_off = float(off.min())
    metzler = worst_off >= -1e-14 * scale

    identity = np.eye(mat.dim)
    worst = math.inf
    for t in times:
        lu = linalg.lu_factor(identity - (t / substeps) * M)
        flow = np.linalg.matrix_power(linalg.lu_solve(lu, identity), substeps)
        worst = min(worst, float((flow / np.max(np.abs(flow), axis=0)).min()))
    positive = worst >= -1e-12
    return KatoReport(metzler, positive, worst_off, worst, mat.dim, tuple(times))


@dataclass
class BValidation:
    max_error: float
    errors: Dict[float, float]
    hypo_ratio: float
    v_ratio: Optional[float] = None


def _smooth_bundle() -> List[Callable[[np.ndarray], np.ndarray]]:
    return [
        lambda x: np.exp(-((x - 2.0) ** 2)),
        lambda x: x * np.exp(-x),
        lambda x: np.exp(-x),
    ]


def validate_B_semigroup(
    model: RateModel,
    eps: float,
    steady: SteadyState,
    grid: Grid,
    t_list: Sequence[float],
    bundle: Optional[Sequence[Callable[[np.ndarray], np.ndarray]]] = None,
    kernel: Optional[DelayKernel] = None,
) -> BValidation:
    """Stepped transport-with-loss against ``e^{A(x-t) - A(x)} g(x - t)``.

    Each step shifts by one cell and multiplies by ``exp(-a(x_i) dt)``; the
    last cell is left out of the comparison since it has no outflow.
    Also measures ``|S_B(t) g| / (C e^{-3 a0 t / 4} |g|)`` and, given a delay
    density, the omega-weighted decay of the pure history shift.
    """
    bundle = list(bundle or _smooth_bundle())
    dx = grid.dx
    xs = grid.centers
    mu = eps * steady.M
    a = np.broadcast_to(model.rate(xs, mu), xs.shape)
    survive = np.exp(-a * dx)
    A = model.primitive(xs, mu)
    C = math.exp(0.75 * model.a0 * (model.level_age(0.75) + dx))

    errors: Dict[float, float] = {}
    hypo = 0.0
    for t in t_list:
        K = int(round(t / dx))
        if abs(K * dx - t) > 1e-9 * max(1.0, t):
            raise DomainError(f"t={t} is not a multiple of dx={dx}")
        worst = 0.0
        for g_fn in bundle:
            g0 = g_fn(xs)
            g = g0.copy()
            for _ in range(K):
                moved = g * survive
                g = np.zeros_like(g)
                g[1:] = moved[:-1]
                g[-1] += moved[-1]
            exact = np.zeros_like(g)
            if K:
                exact[K:] = np.exp(A[:-K] - A[K:]) * g0[:-K]
            else:
                exact = g0.copy()
            worst = max(worst, float(np.sum(np.abs(g - exact)[:-1]) * dx))
            norm0 = np.sum(np.abs(g0)) * dx
            hypo = max(hypo, float(np.sum(np.abs(g)) * dx / (C * math.exp(-0.75 * model.a0 * t) * norm0)))
        errors[float(t)] = worst

    v_ratio = None
    if kernel is not None and kernel.is_density:
        grid_v = delay_grid(kernel, grid)
        weight = grid_v.weight(kernel.delta)
        shift = upwind_matrix(grid_v.n, grid_v.dx, outflow=True) * grid_v.dx + np.eye(grid_v.n)
        v_ratio = 0.0
        for t in t_list:
            K = int(round(t / dx))
            for v_fn in bundle:
                v0 = v_fn(grid_v.centers)
                v = np.linalg.matrix_power(shift, K) @ v0
                ratio = np.sum(np.abs(v) * weight) / (math.exp(-kernel.delta * t) * np.sum(np.abs(v0) * weight))
                v_ratio = max(v_ratio, float(ratio))

    max_error = max(errors.values()) if errors else 0.0
    logger.debug("B-semigroup validation: max error %.3g, hypo ratio %.3g", max_error, hypo)
    return BValidation(max_error=max_error, errors=errors, hypo_ratio=hypo, v_ratio=v_ratio)
