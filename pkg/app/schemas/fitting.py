from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from app.schemas.device import FITTABLE_PARAMS, ModelParams
from app.schemas.sweep import IVSweep


class FitProblem(BaseModel):
    sweeps: List[IVSweep] = Field(min_length=1)
    initial: ModelParams
    free: List[str] = Field(default_factory=list)
    bounds: Dict[str, Tuple[float, float]] = Field(default_factory=dict)
    max_iterations: int = Field(default=5000, gt=0)
    restarts: int = Field(default=3, ge=1)
    polish: bool = True

    @field_validator("free")
    @classmethod
    def validate_free(cls, v: List[str]) -> List[str]:
        unknown = [name for name in v if name not in FITTABLE_PARAMS]
        if unknown:
            raise ValueError(f"Unknown free parameters: {', '.join(unknown)}")
        if len(set(v)) != len(v):
            raise ValueError("Free parameters must be unique")
        return v

    @model_validator(mode="after")
    def check_bounds(self):
        for name in self.free:
            if name not in self.bounds:
                raise ValueError(f"Missing bounds for free parameter {name}")
            lower, upper = self.bounds[name]
            if not lower < upper:
                raise ValueError(f"Bounds for {name} must satisfy lower < upper")
            value = getattr(self.initial, name)
            if not lower <= value <= upper:
                raise ValueError(f"Initial {name}={value} lies outside its bounds")
        return self


class SweepError(BaseModel):
    index: int
    device_id: Optional[str] = None
    t_k: float
    v_ds: float
    mean_rel_error: float


class ObjectiveBreakdown(BaseModel):
    mean_rel_error: float
    per_sweep: List[SweepError]

    def per_temperature(self) -> Dict[float, float]:
        grouped: Dict[float, List[float]] = {}
        for row in self.per_sweep:
            grouped.setdefault(row.t_k, []).append(row.mean_rel_error)
        return {t: sum(v) / len(v) for t, v in sorted(grouped.items())}


class FitResult(BaseModel):
    params: ModelParams
    mean_rel_error: float
    per_sweep: List[SweepError]
    iterations: int
    converged: bool
    restarts_run: int
    polished: bool = False
    trace: List[float] = Field(default_factory=list)


class CalibrateRequest(BaseModel):
    problem: FitProblem
    seed: Optional[int] = None


class AnchorKind(str, Enum):
    VTH_CC = "vth_cc"
    VTH_Y = "vth_y"
    SS = "ss"
    IDSAT_PER_UM = "idsat_per_um"
    ON_OFF = "on_off"
    GM_MAX = "gm_max"
    VTH_ABS_MAX = "vth_abs_max"


class Comparison(str, Enum):
    WITHIN = "within"
    AT_LEAST = "at_least"
    AT_MOST = "at_most"


class Anchor(BaseModel):
    """A measured target a reference parameter set must reproduce."""

    set_name: str
    kind: AnchorKind
    t_k: float
    target: float
    tolerance: float = Field(default=0.0, ge=0)
    v_dd: float = 0.9
    comparison: Comparison = Comparison.WITHIN

    @property
    def label(self) -> str:
        return f"{self.set_name}:{self.kind.value}@{self.t_k:g}K,{self.v_dd:g}V"


class AnchorOutcome(BaseModel):
    anchor: Anchor
    value: float
    met: bool


class CalibrationReport(BaseModel):
    params: Dict[str, ModelParams]
    outcomes: List[AnchorOutcome]

    @property
    def unmet(self) -> List[AnchorOutcome]:
        return [o for o in self.outcomes if not o.met]
