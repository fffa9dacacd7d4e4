"""
Tests for the firing-rate families and the delay kernels
"""
import math
from dataclasses import dataclass

import numpy as np
import pytest
from scipy import integrate

from elapsed.errors import DiracNotDensity, DomainError, NonSmoothModel
from elapsed.rates import (
    Constant,
    Dirac,
    ErlangDensity,
    ExpDensity,
    LogisticThreshold,
    Order,
    SampleLattice,
    SoftSigmoid,
    StepThreshold,
    check_delay_hypothesis,
    check_rate_hypotheses,
    delay_weight,
    eval_rate,
    primitive_A,
)


@dataclass(frozen=True)
class Fading(Constant):
    """Rate that decreases with age, so it violates monotonicity."""

    def rate(self, x, mu):
        return self.a * np.exp(-np.asarray(x, dtype=float)) + 0.0 * np.asarray(mu, dtype=float)


def test_constant_rate():
    """A constant rate has no derivatives and a linear primitive"""
    model = Constant(1.5)
    xs = np.linspace(0.0, 10.0, 11)
    assert np.all(eval_rate(model, xs, 0.3) == 1.5)
    assert np.all(eval_rate(model, xs, 0.3, Order.DX) == 0.0)
    assert np.all(eval_rate(model, xs, 0.3, "dmu") == 0.0)
    assert np.allclose(primitive_A(model, xs, 2.0), 1.5 * xs, rtol=0, atol=1e-15)


def test_soft_sigmoid_levels(soft):
    """a vanishes at age zero and tends to a0 at mu = 0 and a1 at large mu"""
    assert eval_rate(soft, 0.0, 3.0) == 0.0
    assert math.isclose(eval_rate(soft, 1.0, 0.0), 1.0 - math.exp(-1.0), rel_tol=1e-14)
    assert math.isclose(eval_rate(soft, 1e3, 0.0), soft.a0, rel_tol=1e-14)
    assert math.isclose(eval_rate(soft, 1e3, 1e3), soft.a1, rel_tol=1e-14)


@pytest.mark.parametrize("x, mu", [(0.3, 0.2), (1.7, 1.1), (4.0, 0.05)])
def test_soft_sigmoid_derivatives(soft, x, mu):
    """Closed-form derivatives agree with central differences"""
    h = 1e-6
    dx = (soft.rate(x + h, mu) - soft.rate(x - h, mu)) / (2 * h)
    dmu = (soft.rate(x, mu + h) - soft.rate(x, mu - h)) / (2 * h)
    dmumu = (soft.d_mu(x, mu + h) - soft.d_mu(x, mu - h)) / (2 * h)
    assert math.isclose(eval_rate(soft, x, mu, Order.DX), dx, rel_tol=1e-7)
    assert math.isclose(eval_rate(soft, x, mu, Order.DMU), dmu, rel_tol=1e-7)
    assert math.isclose(eval_rate(soft, x, mu, Order.DMUMU), dmumu, rel_tol=1e-6)


def test_soft_sigmoid_primitive(soft):
    """The primitive is the integral of the rate from zero"""
    for x, mu in [(0.5, 0.0), (3.0, 0.4), (12.0, 2.0)]:
        expected = integrate.quad(lambda y: soft.rate(y, mu), 0.0, x, epsabs=1e-14, epsrel=1e-13)[0]
        assert math.isclose(float(primitive_A(soft, x, mu)), expected, rel_tol=1e-11)


@pytest.mark.parametrize("x, mu", [(3.5, 0.1), (4.2, 0.6), (2.0, 1.5)])
def test_logistic_threshold_derivatives(x, mu):
    """The smooth threshold has closed-form derivatives in both arguments"""
    model = LogisticThreshold()
    h = 1e-6
    dx = (model.rate(x + h, mu) - model.rate(x - h, mu)) / (2 * h)
    dmu = (model.rate(x, mu + h) - model.rate(x, mu - h)) / (2 * h)
    dmumu = (model.d_mu(x, mu + h) - model.d_mu(x, mu - h)) / (2 * h)
    assert math.isclose(eval_rate(model, x, mu, Order.DX), dx, rel_tol=1e-6)
    assert math.isclose(eval_rate(model, x, mu, Order.DMU), dmu, rel_tol=1e-6)
    assert math.isclose(eval_rate(model, x, mu, Order.DMUMU), dmumu, rel_tol=1e-6)


def test_logistic_threshold_primitive_and_hypotheses():
    """Softplus primitive, level a0 = a1 and all sampled hypotheses"""
    model = LogisticThreshold()
    for x, mu in [(3.0, 0.0), (4.5, 0.4), (12.0, 2.0)]:
        expected = integrate.quad(lambda y: model.rate(y, mu), 0.0, x, epsabs=1e-14, epsrel=1e-13)[0]
        assert math.isclose(float(primitive_A(model, x, mu)), expected, rel_tol=1e-10)
    assert model.a0 == model.a1 == 4.0
    assert check_rate_hypotheses(model).passes
    with pytest.raises(DomainError):
        LogisticThreshold(width=0.0)


def test_negative_arguments_rejected(soft):
    """Ages and activities outside the quadrant are domain errors"""
    with pytest.raises(DomainError):
        eval_rate(soft, -0.1, 0.0)
    with pytest.raises(DomainError):
        primitive_A(soft, 1.0, -1.0)


def test_step_threshold():
    """The step rate is right-open and has no derivatives"""
    model = StepThreshold(1.0, 0.5)
    assert eval_rate(model, 1.0, 0.0) == 0.0
    assert eval_rate(model, 1.0 + 1e-12, 0.0) == 1.0
    assert math.isclose(float(primitive_A(model, 3.0, 0.0)), 2.0)
    with pytest.raises(NonSmoothModel):
        eval_rate(model, 1.0, 0.0, Order.DX)


def test_sup_norms(soft):
    """|a| + |d_x a| + |d_mu a| for the unit soft sigmoid"""
    assert soft.w1inf_norm() == pytest.approx(5.0)
    assert soft.half_level_age() == pytest.approx(math.log(2.0), abs=1e-12)
    assert Constant(2.0).half_level_age() == 0.0


def test_hypotheses_hold_for_smooth_families(soft):
    """Constant and soft sigmoid rates satisfy every sampled hypothesis"""
    assert check_rate_hypotheses(soft).passes
    assert check_rate_hypotheses(Constant(0.7)).passes


def test_step_fails_smoothness_near_threshold():
    """The witness of the smoothness failure sits on the jump"""
    model = StepThreshold(1.0, 0.5)
    report = check_rate_hypotheses(model, SampleLattice(5.0, 5.0, 101, 101))
    assert report.passes_a1
    assert report.passes_a2
    assert not report.passes_a3
    x, mu = report.witnesses["a3"]
    assert abs(x - float(model.threshold(mu))) <= 0.15


def test_decreasing_rate_fails_monotonicity():
    """An age-decreasing rate is caught with a witness"""
    report = check_rate_hypotheses(Fading(1.0), SampleLattice(5.0, 5.0, 51, 51))
    assert not report.passes_a1
    assert not report.passes_a2
    assert "a1" in report.witnesses


def test_tiny_lattice_rejected(soft):
    """Second differences need three points per axis"""
    with pytest.raises(DomainError):
        check_rate_hypotheses(soft, SampleLattice(1.0, 1.0, 2, 10))


def test_exp_density():
    """Exponential density, its default tail exponent and its derivative"""
    kernel = ExpDensity(tau=2.0)
    ys = np.array([0.0, 0.5, 3.0])
    assert np.allclose(delay_weight(kernel, ys), np.exp(-ys / 2.0) / 2.0, rtol=1e-13)
    assert np.allclose(kernel.derivative(ys), -np.exp(-ys / 2.0) / 4.0, rtol=1e-13)
    assert kernel.delta == pytest.approx(0.25)
    with pytest.raises(DomainError):
        delay_weight(kernel, -1.0)


def test_erlang_derivative():
    """Erlang derivative against a central difference"""
    kernel = ErlangDensity(k=3, tau=0.4)
    h = 1e-6
    for y in (0.2, 0.8, 2.5):
        fd = (kernel.density(y + h) - kernel.density(y - h)) / (2 * h)
        assert math.isclose(float(kernel.derivative(y)), fd, rel_tol=1e-6)


def test_weighted_integral_exponential():
    """int e^{delta y}(b + |b'|) = (1 + 1/tau)/(1 - delta tau) for the exponential"""
    report = check_delay_hypothesis(ExpDensity(tau=1.0, delta=0.5))
    assert report.finite
    assert report.weighted_integral == pytest.approx(4.0, rel=1e-7)
    assert report.mass == pytest.approx(1.0, abs=1e-10)
    assert not report.m_equals_p


def test_weighted_integral_diverges():
    """delta >= 1/tau leaves the finiteness region"""
    report = check_delay_hypothesis(ExpDensity(tau=1.0, delta=1.0))
    assert not report.finite


def test_erlang_hypothesis():
    """Erlang kernels inside the region have unit mass and a finite weighted integral"""
    report = check_delay_hypothesis(ErlangDensity(k=2, tau=0.5, delta=1.0))
    assert report.finite
    assert report.mass == pytest.approx(1.0, abs=1e-10)


def test_dirac_kernel():
    """The Dirac delay has no density and gives m = p"""
    kernel = Dirac()
    with pytest.raises(DiracNotDensity):
        delay_weight(kernel, 1.0)
    assert check_delay_hypothesis(kernel).m_equals_p
    assert kernel.horizon() == 0.0


def test_cell_weights(exp_kernel):
    """Cell weights sum to one and cover the kernel horizon"""
    dy = 0.05
    depth = exp_kernel.depth(dy)
    weights = exp_kernel.cell_weights(dy, depth)
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert depth * dy >= exp_kernel.horizon()
    assert np.all(weights >= 0)
