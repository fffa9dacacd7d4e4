"""
Tests for the nonlinear stepper, the activity fixed point and relaxation rates
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from elapsed.dynamics import (
    HistoryBuffer,
    activity_bisection,
    activity_fixed_point,
    discrete_steady,
    fit_decay,
    fit_decay_rate,
    gronwall_bound,
    gronwall_constants,
    gronwall_envelope,
    initial_density,
    lipschitz_sides,
    nonlinear_residual,
    remainder,
    simulate,
    step,
    sup_distance,
)
from elapsed.errors import CFLViolation, ContractionViolated, DomainError, MassNotZero, WindowBelowFloor
from elapsed.grid import DensityState, Grid, l1_norm
from elapsed.rates import Constant, Dirac, ExpDensity
from elapsed.spectrum import assemble_delay, assemble_nodelay, spectrum_report
from elapsed.steady import solve_steady


def uniform(grid, width=2.0):
    return initial_density(grid, None, "uniform", width=width)


def smooth_perturbation(steady, rng, size=0.1):
    """Mass-zero perturbation g with F + g >= 0."""
    F = steady.F.values
    r = rng.uniform(-1.0, 1.0, F.size)
    shift = np.dot(F, r) / F.sum()
    return DensityState(size * F * (r - shift), steady.grid)


def test_history_buffer(exp_kernel):
    """Pre-filled history returns its start value; push drops the oldest entry"""
    history = HistoryBuffer.for_kernel(exp_kernel, 0.05, start=0.7)
    assert history.depth * 0.05 >= exp_kernel.horizon()
    assert history.activity() == pytest.approx(0.7, rel=1e-12)
    history.push(1.7)
    assert history[0] == 1.7
    assert len(history) == history.depth
    assert history.activity() == pytest.approx(0.7 + history.weights[0], rel=1e-12)


def test_step_requires_cfl(soft, grid20):
    """dt must equal dx"""
    f = uniform(grid20)
    with pytest.raises(CFLViolation):
        step(soft, None, 0.1, f, None, 0.5 * grid20.dx)


def test_step_needs_history_for_density_kernel(soft, grid20, exp_kernel):
    """A delay density without its history buffer is refused"""
    with pytest.raises(DomainError):
        step(soft, exp_kernel, 0.1, uniform(grid20), None, grid20.dx)


def test_fit_needs_reference_distances(soft, grid20):
    """Trajectories run without a reference have no distances to fit"""
    traj = simulate(soft, None, 0.1, uniform(grid20), 5.0)
    assert np.all(np.isnan(traj.l1_dist))
    with pytest.raises(DomainError):
        fit_decay_rate(traj, (1.0, 4.0))


def test_dirac_activity_equals_discharge(soft, grid20):
    """Without a density kernel m(t) = p(t) at every step"""
    traj = simulate(soft, Dirac(), 0.1, uniform(grid20), 2.0)
    assert np.array_equal(traj.m, traj.p)


def test_constant_rate_mass(grid20):
    """Mass is conserved to rounding for a constant rate"""
    traj = simulate(Constant(1.0), None, 0.0, uniform(grid20), 5.0)
    assert traj.mass_drift <= 1e-12


def test_mass_conservation_long_run(soft, grid40):
    """Ten thousand steps of the coupled model keep unit mass"""
    base = solve_steady(soft, 0.05, grid40)[0]
    f0 = initial_density(grid40, base.F, "perturbed", 0.1, "sine")
    traj = simulate(soft, None, 0.05, f0, 10_000 * grid40.dx, record_every=100, snapshot_every=2_000)
    assert np.max(np.abs(traj.mass - 1.0)) <= 1e-10
    assert all(np.all(values >= 0) for values in traj.snapshots.values())


def test_fixed_point_uncoupled(soft, grid20):
    """At eps = 0 the activity is the plain pairing with a(x, 0)"""
    f = uniform(grid20)
    expected = float(np.dot(soft.rate(grid20.centers, 0.0), f.values) * grid20.dx)
    assert activity_fixed_point(soft, 0.0, f) == pytest.approx(expected, rel=1e-14)


def test_fixed_point_against_bisection(soft, grid20):
    """Fixed-point iteration and bisection agree"""
    f = uniform(grid20)
    assert activity_fixed_point(soft, 0.1, f) == pytest.approx(activity_bisection(soft, 0.1, f), abs=1e-10)


def test_fixed_point_needs_contraction(soft, grid20):
    """eps |d_mu a| >= 1 is refused"""
    with pytest.raises(ContractionViolated):
        activity_fixed_point(soft, 1.0, uniform(grid20))


def test_constant_rate_activity(grid40):
    """For a constant rate the activity is a times the mass"""
    state = solve_steady(Constant(1.5), 0.2, grid40)[0]
    assert activity_fixed_point(Constant(1.5), 0.2, state.F) == pytest.approx(state.M, abs=1e-10)


def test_discrete_steady_is_stationary(soft, grid40):
    """The stepper leaves the discrete steady state in place"""
    guess = solve_steady(soft, 0.05, grid40)[0].M
    ref = discrete_steady(soft, 0.05, grid40, guess)
    assert activity_fixed_point(soft, 0.05, ref.F) == pytest.approx(ref.M, abs=1e-12)
    assert ref.M == pytest.approx(guess, rel=1e-3)
    traj = simulate(soft, None, 0.05, ref.F, 200 * grid40.dx, ref.F)
    assert np.max(traj.l1_dist) <= 1e-10


def test_continuous_steady_nearly_stationary(soft, grid40):
    """One step from the continuous profile moves it by O(dx^2)"""
    state = solve_steady(soft, 0.05, grid40)[0]
    f1, _, _ = step(soft, None, 0.05, state.F, None, grid40.dx)
    assert l1_norm(f1 - state.F) <= 10 * grid40.dx**2


def test_fit_decay_synthetic():
    """Exact exponential data are fitted exactly"""
    t = np.linspace(0.0, 10.0, 101)
    fit = fit_decay(t, 3.0 * np.exp(-0.7 * t), (1.0, 9.0))
    assert fit.alpha == pytest.approx(-0.7, abs=1e-12)
    assert fit.C == pytest.approx(3.0, rel=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_decay_window_errors():
    """Empty windows and windows reaching the floor are refused"""
    t = np.linspace(0.0, 10.0, 101)
    with pytest.raises(DomainError):
        fit_decay(t, np.exp(-t), (5.0, 5.0))
    with pytest.raises(WindowBelowFloor):
        fit_decay(t, np.exp(-5.0 * t), (1.0, 9.0))


def test_constant_rate_relaxation(grid40):
    """With a constant rate a mass-zero perturbation decays like e^{-at}"""
    model = Constant(1.0)
    base = solve_steady(model, 0.0, grid40)[0]
    f0 = initial_density(grid40, base.F, "perturbed", 0.2, "bump")
    traj = simulate(model, None, 0.0, f0, 15.0, base.F)
    fit = fit_decay_rate(traj, (3.0, 12.0))
    assert fit.alpha <= -0.5 * model.a


def test_relaxation_matches_gap(soft, grid40):
    """The nonlinear decay rate is the spectral gap within ten percent"""
    eps = 0.05
    base = solve_steady(soft, eps, grid40)[0]
    ref = discrete_steady(soft, eps, grid40, base.M)
    f0 = initial_density(grid40, ref.F, "perturbed", 0.1, "sine")
    traj = simulate(soft, None, eps, f0, 25.0, ref.F)
    fit = fit_decay_rate(traj, (5.0, 20.0))
    gap = spectrum_report(assemble_nodelay(soft, eps, base)).gap
    assert gap < 0
    assert fit.r2 >= 0.99
    assert abs(fit.alpha - gap) <= 0.1 * abs(gap)


def test_delayed_relaxation_matches_gap(soft, grid40, exp_kernel):
    """With an exponential delay the rate follows the block generator's gap"""
    eps = 0.05
    base = solve_steady(soft, eps, grid40)[0]
    ref = discrete_steady(soft, eps, grid40, base.M)
    f0 = initial_density(grid40, ref.F, "perturbed", 0.1, "sine")
    traj = simulate(soft, exp_kernel, eps, f0, 25.0, ref.F)
    assert not np.array_equal(traj.m, traj.p)
    fit = fit_decay_rate(traj, (5.0, 20.0))
    gap = spectrum_report(assemble_delay(soft, exp_kernel, eps, base)).gap
    assert gap < 0
    assert abs(fit.alpha - gap) <= 0.1 * abs(gap)


def test_short_delays_approach_instantaneous(soft, grid20):
    """Trajectories with delay approach the undelayed one as tau shrinks"""
    eps = 0.05
    base = solve_steady(soft, eps, grid20)[0]
    f0 = initial_density(grid20, base.F, "perturbed", 0.1, "sine")
    plain = simulate(soft, None, eps, f0, 10.0, snapshot_every=10)
    distances = []
    for tau in (0.2, 0.1, 0.05):
        delayed = simulate(soft, ExpDensity(tau=tau), eps, f0, 10.0, snapshot_every=10)
        distances.append(sup_distance(delayed, plain, grid20))
    assert distances[0] > distances[1] > distances[2]


def test_remainder_vanishes_without_perturbation(soft, grid40):
    """Z[0] = 0"""
    state = solve_steady(soft, 0.1, grid40)[0]
    assert nonlinear_residual(soft, 0.1, state, DensityState.zeros(grid40)) == 0.0


def test_remainder_uncoupled_is_zero(soft, grid40, rng):
    """At eps = 0 the model is linear"""
    state = solve_steady(soft, 0.0, grid40)[0]
    g = smooth_perturbation(state, rng)
    assert nonlinear_residual(soft, 0.0, state, g) <= 1e-12


def test_remainder_is_quadratic(soft, rng):
    """Halving g divides the remainder by four and Z carries no mass"""
    grid = Grid(30.0, 300)
    state = solve_steady(soft, 0.1, grid)[0]
    for _ in range(20):
        g = smooth_perturbation(state, rng)
        ratio = nonlinear_residual(soft, 0.1, state, g) / nonlinear_residual(soft, 0.1, state, g * 0.5)
        assert 3.5 <= ratio <= 4.5
        assert abs(remainder(soft, 0.1, state, g).sum() * grid.dx) <= 1e-12


def test_remainder_needs_mass_zero(soft, grid40):
    """Perturbations with mass are refused"""
    state = solve_steady(soft, 0.1, grid40)[0]
    with pytest.raises(MassNotZero):
        remainder(soft, 0.1, state, state.F * 0.01)


def test_activity_lipschitz(soft, grid20, rng):
    """|phi[f] - phi[g]| (1 - eps |d_mu a|) <= |a|_W1inf W1(f, g)"""
    for _ in range(100):
        f, g = rng.random(grid20.n), rng.random(grid20.n)
        f = DensityState(f / (f.sum() * grid20.dx), grid20)
        g = DensityState(g / (g.sum() * grid20.dx), grid20)
        lhs, rhs = lipschitz_sides(soft, 0.1, f, g)
        assert lhs <= rhs + 1e-12


def test_gronwall_against_riccati():
    """u' = -u + u^2 from 1/4 stays below the majorant"""
    ts = np.linspace(0.0, 20.0, 401)
    sol = solve_ivp(lambda t, u: -u + u**2, (0.0, 20.0), [0.25], t_eval=ts, rtol=1e-10, atol=1e-14)
    exact = 1.0 / (3.0 * np.exp(ts) + 1.0)
    assert np.allclose(sol.y[0], exact, rtol=1e-7)
    bound = gronwall_bound(ts, -1.0, 1.0, 1.0, 0.25)
    assert bound[0] == pytest.approx(0.375)
    assert np.all(sol.y[0] <= bound)


def test_gronwall_smallness():
    """a + 2 C2 u0 >= 0 has no bound"""
    with pytest.raises(DomainError):
        gronwall_bound(1.0, -1.0, 1.0, 1.0, 0.5)


def test_gronwall_envelope_majorizes():
    """Given constants, the envelope covers a curve that decays at the linear rate"""
    t = np.linspace(0.0, 10.0, 51)
    norms = 0.1 * np.exp(-t) * (1.0 + 0.2 * np.sin(t))
    bound, holds = gronwall_envelope(t, norms, -1.0, 1.2, 1.0)
    assert holds
    assert np.all(bound >= norms)


def test_gronwall_envelope_rejects_growth():
    """A growing curve is not covered by a decaying bound"""
    t = np.linspace(0.0, 10.0, 51)
    _, holds = gronwall_envelope(t, 0.1 * np.exp(0.5 * t), -1.0, 1.0, 1.0)
    assert not holds


def test_gronwall_closes_on_relaxation(soft, rng):
    """Measured constants turn the nonlinear relaxation curve into a covered one"""
    eps = 0.05
    grid = Grid(30.0, 300)
    state = solve_steady(soft, eps, grid)[0]
    ref = discrete_steady(soft, eps, grid, state.M)
    f0 = initial_density(grid, ref.F, "perturbed", 0.05, "sine")
    traj = simulate(soft, None, eps, f0, 15.0, ref.F)
    constants = gronwall_constants(soft, eps, state, rng, 15.0)
    assert constants.a < 0
    assert constants.C1 >= 1.0
    assert constants.K > 0
    assert constants.a + 2.0 * constants.C2 * traj.l1_dist[0] < 0
    bound, holds = gronwall_envelope(traj.t, traj.l1_dist, constants.a, constants.C1, constants.C2)
    assert holds
    assert bound[-1] < bound[0]
