from typing import Dict, List, Optional

from pydantic import BaseModel


# Result records written by the runners
class SteadyRow(BaseModel):
    eps: float
    root_index: int
    M: float
    residual: float
    margin: float


class SteadySummary(BaseModel):
    eps: float
    root_count: int
    refined_root_count: Optional[int] = None
    min_margin: float


class DecayRecord(BaseModel):
    eps: float
    stationary: bool = False
    alpha: Optional[float] = None
    C: Optional[float] = None
    r2: Optional[float] = None
    gap: Optional[float] = None
    relative_error: Optional[float] = None
    mass_drift: float
    amplitude: float


class SpectrumSummary(BaseModel):
    eps: float
    gap: float
    cut: float
    n_dominant: int
    zero_re: float
    zero_im: float
    zero_residual: float
    positive: bool
    cut_misuse: bool
    a_star: float
    a_sharp: float
    dimension: int
    kappa: float
    mass_error: float
    metzler: Optional[bool] = None
    semigroup_positive: Optional[bool] = None


class BasinRow(BaseModel):
    eps: float
    amplitude: float
    decays: bool
    alpha: Optional[float] = None
    mass_drift: Optional[float] = None


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: Dict[str, float] = {}


class CheckSuite(BaseModel):
    results: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)
