"""Firing-rate models a(x, mu) and delay kernels b(y).

Rates are functions of the age x (time elapsed since the last discharge) and
of the network activity mu. The smooth families satisfy the standing
hypotheses: a nondecreasing in both arguments, a(x, 0) -> a0 > 0 as x grows,
a bounded by a1, and bounded second derivatives. The step-threshold rate is
kept for experiments but violates the smoothness hypothesis.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar, Dict, Optional, Tuple

import numpy as np
from scipy import integrate, optimize, special, stats

from elapsed.errors import DiracNotDensity, DomainError, NonSmoothModel

logger = logging.getLogger(__name__)


class Order(str, Enum):
    """Derivative selector for :func:`eval_rate`."""

    A = "a"
    DX = "dx"
    DMU = "dmu"
    DMUMU = "dmumu"


class RateModel:
    """Base class of the firing-rate families.

    Subclasses implement vectorised ``rate``, ``d_x``, ``d_mu``, ``d_mumu``
    and ``primitive`` without argument checks; :func:`eval_rate` and
    :func:`primitive_A` are the checked entry points.
    """

    kind: ClassVar[str] = "abstract"
    smooth: ClassVar[bool] = True

    @property
    def a0(self) -> float:
        raise NotImplementedError

    @property
    def a1(self) -> float:
        raise NotImplementedError

    def rate(self, x, mu):
        raise NotImplementedError

    def d_x(self, x, mu):
        raise NotImplementedError

    def d_mu(self, x, mu):
        raise NotImplementedError

    def d_mumu(self, x, mu):
        raise NotImplementedError

    def primitive(self, x, mu):
        raise NotImplementedError

    # sup norms over R_+^2, used by the contraction and Lipschitz bounds
    def sup_d_x(self) -> float:
        raise NotImplementedError

    def sup_d_mu(self) -> float:
        raise NotImplementedError

    def w1inf_norm(self) -> float:
        """``|a|_inf + |d_x a|_inf + |d_mu a|_inf``."""
        return self.a1 + self.sup_d_x() + self.sup_d_mu()

    def half_level_age(self) -> float:
        """Smallest age x0 with a(x0, 0) >= a0/2."""
        return self.level_age(0.5)

    def level_age(self, fraction: float) -> float:
        """Smallest age x with a(x, 0) >= fraction * a0, for 0 < fraction < 1."""
        target = fraction * self.a0
        if float(self.rate(0.0, 0.0)) >= target:
            return 0.0
        hi = 1.0
        while float(self.rate(hi, 0.0)) < target:
            hi *= 2.0
            if hi > 1e12:
                raise DomainError(f"{self.kind}: rate never reaches {fraction} a0")
        return float(
            optimize.bisect(lambda x: float(self.rate(x, 0.0)) - target, 0.0, hi, xtol=1e-14)
        )

    def tail_constant(self) -> float:
        """C in the steady-state tail bound F(x) <= C exp(-a0 x / 2)."""
        return math.exp(0.5 * self.a0 * self.half_level_age()) * self.a1

    def describe(self) -> Dict[str, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(RateModel):
    a: float = 1.0

    kind: ClassVar[str] = "constant"

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"constant rate must be positive, got {self.a}")

    @property
    def a0(self) -> float:
        return self.a

    @property
    def a1(self) -> float:
        return self.a

    def rate(self, x, mu):
        return np.full(np.broadcast(np.asarray(x), np.asarray(mu)).shape, self.a)[()]

    def d_x(self, x, mu):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(mu)).shape)[()]

    d_mu = d_x
    d_mumu = d_x

    def primitive(self, x, mu):
        return self.a * np.asarray(x, dtype=float) + 0.0 * np.asarray(mu, dtype=float)

    def sup_d_x(self) -> float:
        return 0.0

    def sup_d_mu(self) -> float:
        return 0.0

    def describe(self):
        return {"a": self.a}


@dataclass(frozen=True)
class SoftSigmoid(RateModel):
    """a(x, mu) = (a0 + (a1 - a0)(1 - exp(-lmu mu))) (1 - exp(-lx x))."""

    level0: float = 1.0
    level1: float = 2.0
    lx: float = 1.0
    lmu: float = 1.0

    kind: ClassVar[str] = "soft_sigmoid"

    def __post_init__(self):
        if not (self.level0 > 0 and self.level1 >= self.level0):
            raise DomainError(f"need 0 < a0 <= a1, got a0={self.level0}, a1={self.level1}")
        if not (self.lx > 0 and self.lmu > 0):
            raise DomainError("lx and lmu must be positive")

    @property
    def a0(self) -> float:
        return self.level0

    @property
    def a1(self) -> float:
        return self.level1

    def _level(self, mu):
        return self.level0 + (self.level1 - self.level0) * -np.expm1(-self.lmu * np.asarray(mu, dtype=float))

    def _shape(self, x):
        return -np.expm1(-self.lx * np.asarray(x, dtype=float))

    def rate(self, x, mu):
        return self._level(mu) * self._shape(x)

    def d_x(self, x, mu):
        return self._level(mu) * self.lx * np.exp(-self.lx * np.asarray(x, dtype=float))

    def d_mu(self, x, mu):
        slope = (self.level1 - self.level0) * self.lmu * np.exp(-self.lmu * np.asarray(mu, dtype=float))
        return slope * self._shape(x)

    def d_mumu(self, x, mu):
        return -self.lmu * self.d_mu(x, mu)

    def primitive(self, x, mu):
        x = np.asarray(x, dtype=float)
        return self._level(mu) * (x - self._shape(x) / self.lx)

    def sup_d_x(self) -> float:
        return self.level1 * self.lx

    def sup_d_mu(self) -> float:
        return (self.level1 - self.level0) * self.lmu

    def describe(self):
        return {"a0": self.level0, "a1": self.level1, "lx": self.lx, "lmu": self.lmu}


@dataclass(frozen=True)
class StepThreshold(RateModel):
    """a(x, mu) = 1 if x > sigma(mu) else 0, sigma(mu) = s_inf + (s0 - s_inf) e^{-mu}.

    The jump is right-open: a(sigma(mu), mu) = 0.
    """

    s0: float = 1.0
    s_inf: float = 0.5

    kind: ClassVar[str] = "step"
    smooth: ClassVar[bool] = False

    def __post_init__(self):
        if not (self.s0 >= self.s_inf > 0):
            raise DomainError(f"need s0 >= s_inf > 0, got s0={self.s0}, s_inf={self.s_inf}")

    @property
    def a0(self) -> float:
        return 1.0

    @property
    def a1(self) -> float:
        return 1.0

    def threshold(self, mu):
        return self.s_inf + (self.s0 - self.s_inf) * np.exp(-np.asarray(mu, dtype=float))

    def rate(self, x, mu):
        return (np.asarray(x, dtype=float) > self.threshold(mu)).astype(float)[()]

    def d_x(self, x, mu):
        raise NonSmoothModel("step threshold rate has no derivative")

    d_mu = d_x
    d_mumu = d_x

    def primitive(self, x, mu):
        return np.maximum(np.asarray(x, dtype=float) - self.threshold(mu), 0.0)

    def sup_d_x(self) -> float:
        return math.inf

    def sup_d_mu(self) -> float:
        return math.inf

    def describe(self):
        return {"s0": self.s0, "s_inf": self.s_inf}


@dataclass(frozen=True)
class LogisticThreshold(RateModel):
    """a(x, mu) = level / (1 + exp(-(x - sigma(mu)) / width)).

    Smooth version of the step threshold, with the same sigma(mu). A high
    level and a narrow width make the interspike interval nearly regular.
    """

    level: float = 4.0
    s0: float = 4.0
    s_inf: float = 2.0
    width: float = 0.25

    kind: ClassVar[str] = "logistic"

    def __post_init__(self):
        if not (self.level > 0 and self.width > 0):
            raise DomainError("level and width must be positive")
        if not (self.s0 >= self.s_inf > 0):
            raise DomainError(f"need s0 >= s_inf > 0, got s0={self.s0}, s_inf={self.s_inf}")

    @property
    def a0(self) -> float:
        return self.level

    @property
    def a1(self) -> float:
        return self.level

    def threshold(self, mu):
        return self.s_inf + (self.s0 - self.s_inf) * np.exp(-np.asarray(mu, dtype=float))

    def _z(self, x, mu):
        return (np.asarray(x, dtype=float) - self.threshold(mu)) / self.width

    def rate(self, x, mu):
        return self.level * special.expit(self._z(x, mu))

    def _bell(self, x, mu):
        s = special.expit(self._z(x, mu))
        return s, s * (1.0 - s)

    def d_x(self, x, mu):
        _, bell = self._bell(x, mu)
        return self.level * bell / self.width

    def d_mu(self, x, mu):
        _, bell = self._bell(x, mu)
        dz = (self.s0 - self.s_inf) * np.exp(-np.asarray(mu, dtype=float)) / self.width
        return self.level * bell * dz

    def d_mumu(self, x, mu):
        s, bell = self._bell(x, mu)
        dz = (self.s0 - self.s_inf) * np.exp(-np.asarray(mu, dtype=float)) / self.width
        return self.level * (bell * (1.0 - 2.0 * s) * dz**2 - bell * dz)

    def primitive(self, x, mu):
        x = np.asarray(x, dtype=float)
        shift = self.threshold(mu) / self.width
        softplus = np.logaddexp(0.0, x / self.width - shift) - np.logaddexp(0.0, -shift)
        return self.level * self.width * softplus

    def sup_d_x(self) -> float:
        return 0.25 * self.level / self.width

    def sup_d_mu(self) -> float:
        return 0.25 * self.level * (self.s0 - self.s_inf) / self.width

    def describe(self):
        return {"level": self.level, "s0": self.s0, "s_inf": self.s_inf, "width": self.width}


def _check_domain(x, mu):
    if np.any(np.asarray(x) < 0) or np.any(np.asarray(mu) < 0):
        raise DomainError("age and activity must be nonnegative")


def eval_rate(model: RateModel, x, mu, order: Order | str = Order.A):
    """Closed-form a, d_x a, d_mu a or d_mumu a at (x, mu)."""
    _check_domain(x, mu)
    order = Order(order)
    if order is not Order.A and not model.smooth:
        raise NonSmoothModel(f"{model.kind} rate has no {order.value} derivative")
    fn = {Order.A: model.rate, Order.DX: model.d_x, Order.DMU: model.d_mu, Order.DMUMU: model.d_mumu}[order]
    return fn(x, mu)


def primitive_A(model: RateModel, x, mu):
    """A(x, mu) = int_0^x a(y, mu) dy."""
    _check_domain(x, mu)
    return model.primitive(x, mu)


@dataclass(frozen=True)
class SampleLattice:
    """Uniform (x, mu) lattice on [0, x_max] x [0, mu_max]."""

    x_max: float = 10.0
    mu_max: float = 10.0
    nx: int = 200
    nmu: int = 200

    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.linspace(0.0, self.x_max, self.nx), np.linspace(0.0, self.mu_max, self.nmu)

    def refined(self) -> "SampleLattice":
        return SampleLattice(self.x_max, self.mu_max, 2 * self.nx - 1, 2 * self.nmu - 1)


@dataclass
class HypothesisReport:
    passes_a1: bool
    passes_a2: bool
    passes_a3: bool
    witnesses: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    @property
    def passes(self) -> bool:
        return self.passes_a1 and self.passes_a2 and self.passes_a3


def _second_differences(model: RateModel, lattice: SampleLattice):
    xs, mus = lattice.axes()
    vals = model.rate(xs[:, None], mus[None, :])
    hx = xs[1] - xs[0]
    hmu = mus[1] - mus[0]
    d2x = np.abs(np.diff(vals, n=2, axis=0)) / hx**2
    d2mu = np.abs(np.diff(vals, n=2, axis=1)) / hmu**2
    ix = np.unravel_index(np.argmax(d2x), d2x.shape)
    imu = np.unravel_index(np.argmax(d2mu), d2mu.shape)
    if d2x[ix] >= d2mu[imu]:
        return float(d2x[ix]), (float(xs[ix[0] + 1]), float(mus[ix[1]]))
    return float(d2mu[imu]), (float(xs[imu[0]]), float(mus[imu[1] + 1]))


def check_rate_hypotheses(model: RateModel, lattice: Optional[SampleLattice] = None) -> HypothesisReport:
    """Sampled checks of monotonicity, asymptotic levels and smoothness.

    Smoothness is judged by refinement: bounded second derivatives keep the
    largest second difference fixed when the lattice step halves, a jump
    multiplies it by four.
    """
    lattice = lattice or SampleLattice()
    if lattice.nx < 3 or lattice.nmu < 3:
        raise DomainError("sample lattice needs at least 3 points per axis")
    xs, mus = lattice.axes()
    vals = model.rate(xs[:, None], mus[None, :])
    tol = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
    witnesses: Dict[str, Tuple[float, float]] = {}

    passes_a1 = True
    for axis in (0, 1):
        diffs = np.diff(vals, axis=axis)
        if np.any(diffs < -tol):
            passes_a1 = False
            i, j = np.unravel_index(np.argmin(diffs), diffs.shape)
            witnesses.setdefault("a1", (float(xs[i]), float(mus[j])))

    far = 1e6 * max(lattice.x_max, lattice.mu_max, 1.0)
    lim0 = float(model.rate(far, 0.0))
    lim1 = float(model.rate(far, far))
    passes_a2 = model.a0 > 0 and model.a1 >= model.a0 and math.isfinite(model.a1)
    if abs(lim0 - model.a0) > 1e-8 * max(1.0, model.a0):
        passes_a2 = False
        witnesses["a2"] = (far, 0.0)
    elif abs(lim1 - model.a1) > 1e-8 * max(1.0, model.a1):
        passes_a2 = False
        witnesses["a2"] = (far, far)
    elif float(np.max(vals)) > model.a1 * (1.0 + 1e-12):
        passes_a2 = False
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        witnesses["a2"] = (float(xs[i]), float(mus[j]))

    coarse, _ = _second_differences(model, lattice)
    fine, where = _second_differences(model, lattice.refined())
    passes_a3 = fine <= 2.0 * coarse + 1e-8
    if not passes_a3:
        witnesses["a3"] = where

    report = HypothesisReport(passes_a1, passes_a2, passes_a3, witnesses)
    logger.debug("hypotheses for %s: %s", model.kind, report)
    return report


class DelayKernel:
    """Delay distribution b of the network activity m = b * p."""

    kind: ClassVar[str] = "abstract"
    is_density: ClassVar[bool] = True

    delta: float

    def density(self, y):
        raise NotImplementedError

    def derivative(self, y):
        raise NotImplementedError

    def cdf(self, y):
        raise NotImplementedError

    def horizon(self, tol: float = 1e-10) -> float:
        """Delay Y beyond which the kernel carries mass at most ``tol``."""
        raise NotImplementedError

    def cell_weights(self, dy: float, n: int) -> np.ndarray:
        """Kernel mass of the cells [j dy, (j+1) dy), renormalised to sum 1."""
        edges = dy * np.arange(n + 1)
        weights = np.diff(self.cdf(edges))
        return weights / weights.sum()

    def depth(self, dy: float, tol: float = 1e-10) -> int:
        return max(1, int(math.ceil(self.horizon(tol) / dy)))

    def describe(self) -> Dict[str, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class Dirac(DelayKernel):
    """b = delta_0, so that m(t) = p(t)."""

    kind: ClassVar[str] = "dirac"
    is_density: ClassVar[bool] = False
    delta: float = math.inf

    def density(self, y):
        raise DiracNotDensity("the Dirac kernel has no pointwise density")

    derivative = density

    def cdf(self, y):
        return np.where(np.asarray(y, dtype=float) >= 0.0, 1.0, 0.0)

    def horizon(self, tol: float = 1e-10) -> float:
        return 0.0

    def describe(self):
        return {}


@dataclass(frozen=True)
class ErlangDensity(DelayKernel):
    """Gamma density with integer shape k and scale tau; k = 1 is exponential."""

    k: int = 2
    tau: float = 1.0
    delta: Optional[float] = None

    kind: ClassVar[str] = "erlang"

    def __post_init__(self):
        if self.k < 1 or not self.tau > 0:
            raise DomainError(f"need k >= 1 and tau > 0, got k={self.k}, tau={self.tau}")
        if self.delta is None:
            object.__setattr__(self, "delta", 0.5 / self.tau)
        elif not self.delta > 0:
            raise DomainError("tail exponent delta must be positive")

    @property
    def _law(self):
        return stats.gamma(a=self.k, scale=self.tau)

    def density(self, y):
        return self._law.pdf(y)

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        if self.k == 1:
            return -self.density(y) / self.tau
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.density(y) * ((self.k - 1) / y - 1.0 / self.tau)
        return np.where(y > 0, out, 0.0 if self.k > 2 else 1.0 / self.tau**2)[()]

    def cdf(self, y):
        return self._law.cdf(y)

    def horizon(self, tol: float = 1e-10) -> float:
        return float(self._law.isf(tol))

    def tail_weighted_integral(self, y_cut: float) -> float:
        """Upper bound of int_Y^inf e^{delta y} (b + |b'|) dy."""
        rate = 1.0 / self.tau - self.delta
        gamma_tail = (1.0 - self.delta * self.tau) ** (-self.k) * special.gammaincc(self.k, y_cut * rate)
        return ((self.k - 1) / y_cut + 1.0 / self.tau + 1.0) * gamma_tail

    def describe(self):
        return {"k": self.k, "tau": self.tau, "delta": self.delta}


@dataclass(frozen=True)
class ExpDensity(ErlangDensity):
    """b(y) = exp(-y/tau) / tau."""

    k: int = 1
    kind: ClassVar[str] = "exp"

    def describe(self):
        return {"tau": self.tau, "delta": self.delta}


def delay_weight(kernel: DelayKernel, y):
    """Density b(y) of a density kernel."""
    if np.any(np.asarray(y) < 0):
        raise DomainError("delay must be nonnegative")
    return kernel.density(y)


@dataclass
class DelayReport:
    finite: bool
    weighted_integral: Optional[float]
    mass: float
    m_equals_p: bool


def check_delay_hypothesis(kernel: DelayKernel, y_cut: Optional[float] = None) -> DelayReport:
    """Numerical check of int_0^inf e^{delta y} (b(y) + |b'(y)|) dy < inf.

    The integral is computed by quadrature on [0, Y] plus an analytic bound
    of the remainder.
    """
    if not kernel.is_density:
        return DelayReport(finite=True, weighted_integral=None, mass=1.0, m_equals_p=True)

    mass = integrate.quad(kernel.density, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    if kernel.delta >= 1.0 / kernel.tau:
        logger.warning("delta=%g outside the finiteness region delta < 1/tau=%g", kernel.delta, 1.0 / kernel.tau)
        return DelayReport(finite=False, weighted_integral=math.inf, mass=mass, m_equals_p=False)

    y_cut = y_cut or kernel.horizon(1e-12)

    def integrand(y):
        return math.exp(kernel.delta * y) * (float(kernel.density(y)) + abs(float(kernel.derivative(y))))

    head = integrate.quad(integrand, 0.0, y_cut, epsabs=1e-13, epsrel=1e-11, limit=400)[0]
    total = head + kernel.tail_weighted_integral(y_cut)
    return DelayReport(finite=math.isfinite(total), weighted_integral=total, mass=mass, m_equals_p=False)
