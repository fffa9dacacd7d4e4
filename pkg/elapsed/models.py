from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from elapsed.errors import ConfigError
from elapsed.grid import Grid
from elapsed.rates import Constant, Dirac, ErlangDensity, ExpDensity, LogisticThreshold, SoftSigmoid, StepThreshold


class Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# Rate Models
class ConstantRate(Spec):
    kind: Literal["constant"] = "constant"
    a: float = Field(gt=0, default=1.0)

    def build(self):
        return Constant(self.a)


class SoftSigmoidRate(Spec):
    kind: Literal["soft_sigmoid"] = "soft_sigmoid"
    a0: float = Field(gt=0, default=1.0)
    a1: float = Field(gt=0, default=2.0)
    lx: float = Field(gt=0, default=1.0)
    lmu: float = Field(gt=0, default=1.0)

    @model_validator(mode="after")
    def check_levels(self):
        if self.a1 < self.a0:
            raise ValueError("a1 must be at least a0")
        return self

    def build(self):
        return SoftSigmoid(self.a0, self.a1, self.lx, self.lmu)


class StepThresholdRate(Spec):
    kind: Literal["step"] = "step"
    s0: float = Field(gt=0, default=1.0)
    s_inf: float = Field(gt=0, default=0.5)

    @model_validator(mode="after")
    def check_thresholds(self):
        if self.s_inf > self.s0:
            raise ValueError("s_inf must not exceed s0")
        return self

    def build(self):
        return StepThreshold(self.s0, self.s_inf)


class LogisticThresholdRate(Spec):
    kind: Literal["logistic"] = "logistic"
    level: float = Field(gt=0, default=4.0)
    s0: float = Field(gt=0, default=4.0)
    s_inf: float = Field(gt=0, default=2.0)
    width: float = Field(gt=0, default=0.25)

    @model_validator(mode="after")
    def check_thresholds(self):
        if self.s_inf > self.s0:
            raise ValueError("s_inf must not exceed s0")
        return self

    def build(self):
        return LogisticThreshold(self.level, self.s0, self.s_inf, self.width)


RateSpec = Annotated[Union[ConstantRate, SoftSigmoidRate, StepThresholdRate, LogisticThresholdRate], Field(discriminator="kind")]


# Delay Models
class DiracDelay(Spec):
    kind: Literal["dirac"] = "dirac"

    def build(self):
        return Dirac()


class ExpDelay(Spec):
    kind: Literal["exp"] = "exp"
    tau: float = Field(gt=0, default=0.5)
    delta: Optional[float] = Field(None, gt=0)

    def build(self):
        return ExpDensity(tau=self.tau, delta=self.delta)


class ErlangDelay(Spec):
    kind: Literal["erlang"] = "erlang"
    k: int = Field(ge=1, default=2)
    tau: float = Field(gt=0, default=0.25)
    delta: Optional[float] = Field(None, gt=0)

    def build(self):
        return ErlangDensity(k=self.k, tau=self.tau, delta=self.delta)


DelaySpec = Annotated[Union[DiracDelay, ExpDelay, ErlangDelay], Field(discriminator="kind")]


# Experiment Models
class GridSpec(Spec):
    x_max: float = Field(gt=0, default=40.0)
    n: int = Field(ge=16, default=800)

    def build(self) -> Grid:
        return Grid(self.x_max, self.n)


class InitialSpec(Spec):
    kind: Literal["steady", "perturbed", "uniform"] = "perturbed"
    amplitude: float = Field(ge=0, default=0.1)
    shape: Literal["sine", "bump", "shift"] = "sine"
    width: float = Field(gt=0, default=2.0)


class ScanSpec(Spec):
    m_max: Optional[float] = Field(None, gt=0)
    n_scan: int = Field(ge=64, default=4096)
    refine_check: bool = True


class SpectrumSpec(Spec):
    cut: Optional[float] = None
    max_block: int = Field(ge=16, le=3000, default=3000)
    n: Optional[int] = Field(None, ge=16, le=3000)


class BasinSpec(Spec):
    amplitudes: List[float] = Field(default_factory=lambda: [0.1, 0.3, 0.6, 0.9])
    bisection_steps: int = Field(ge=0, le=30, default=5)
    t_final: float = Field(gt=0, default=20.0)

    @field_validator("amplitudes")
    @classmethod
    def check_ladder(cls, value):
        if not value:
            raise ValueError("amplitude ladder must not be empty")
        if any(v < 0 for v in value) or sorted(value) != list(value):
            raise ValueError("amplitudes must be nonnegative and increasing")
        return value


class ExperimentConfig(Spec):
    rate: RateSpec = Field(default_factory=SoftSigmoidRate)
    delay: DelaySpec = Field(default_factory=DiracDelay)
    eps: List[float] = Field(min_length=1)
    grid: GridSpec = Field(default_factory=GridSpec)
    initial: InitialSpec = Field(default_factory=InitialSpec)
    t_final: float = Field(gt=0, default=30.0)
    record_every: int = Field(ge=1, default=1)
    snapshot_every: int = Field(ge=0, default=0)
    fit_window: Optional[Tuple[float, float]] = None
    scan: ScanSpec = Field(default_factory=ScanSpec)
    spectrum: SpectrumSpec = Field(default_factory=SpectrumSpec)
    basin: BasinSpec = Field(default_factory=BasinSpec)
    out: str = "runs/latest"
    seed: int = Field(ge=0, lt=2**64, default=0)
    workers: int = Field(ge=1, default=1)

    @field_validator("eps")
    @classmethod
    def check_eps(cls, value):
        if any(e < 0 for e in value):
            raise ValueError("connectivity values must be nonnegative")
        return value

    @model_validator(mode="after")
    def check_window(self):
        if self.fit_window is not None:
            t1, t2 = self.fit_window
            if not 0 <= t1 < t2 <= self.t_final:
                raise ValueError(f"fit_window {self.fit_window} must satisfy 0 <= t1 < t2 <= t_final")
        return self

    def window(self) -> Tuple[float, float]:
        return self.fit_window or (0.2 * self.t_final, 0.8 * self.t_final)


class RunManifest(BaseModel):
    command: str
    config_hash: str
    version: str
    files: List[str] = []
    wall_clock: float = 0.0
    checks: Dict[str, bool] = {}
    status: str = "ok"


def load_config(path) -> ExperimentConfig:
    """Parse a JSON experiment file; every failure surfaces as ConfigError."""
    try:
        text = Path(path).read_text()
        return ExperimentConfig.model_validate_json(text)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}:\n{exc}") from exc


def parse_config(payload: Union[str, Dict]) -> ExperimentConfig:
    try:
        if isinstance(payload, str):
            return ExperimentConfig.model_validate_json(payload)
        return ExperimentConfig.model_validate(payload)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(config: ExperimentConfig) -> str:
    return config.model_dump_json(indent=2)
