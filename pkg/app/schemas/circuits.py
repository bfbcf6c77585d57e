from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.validators import validate_temperature_field
from app.schemas.device import TransistorSpec


class InverterCell(BaseModel):
    model_config = ConfigDict(frozen=True)

    nmos: TransistorSpec
    pmos: TransistorSpec
    c_load: float = Field(gt=0, description="Load capacitance per stage, F")


class RingOscillatorSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    stages: int = Field(ge=3)
    cell: InverterCell
    v_dd: float = Field(gt=0)
    t_k: float

    _check_t = field_validator("t_k")(validate_temperature_field)

    @field_validator("stages")
    @classmethod
    def validate_odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("ring oscillators need an odd stage count")
        return v


class DffSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    cell: InverterCell
    v_dd: float = Field(gt=0)
    t_k: float
    stages: int = Field(default=6, ge=2)

    _check_t = field_validator("t_k")(validate_temperature_field)


class PowerScenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    f_clk: float = Field(ge=0, description="Clock frequency, Hz")
    v_dd: float = Field(gt=0)
    t_k: float
    c_switched: float = Field(ge=0, description="Switched capacitance per cycle, F")
    nmos: TransistorSpec
    pmos: TransistorSpec
    w_n_total_um: float = Field(default=0.0, ge=0)
    w_p_total_um: float = Field(default=0.0, ge=0)

    _check_t = field_validator("t_k")(validate_temperature_field)


class PowerBreakdown(BaseModel):
    dynamic_w: float
    static_w: float
    total_w: float


class Technology(BaseModel):
    """A named pairing of NMOS and PMOS reference sets."""

    name: str
    nmos: str
    pmos: str


class ComparisonRow(BaseModel):
    technology: str
    v_dd: float
    t_k: float
    f_ro_hz: Optional[float] = None
    dff_delay_s: Optional[float] = None
    power_w: Optional[float] = None
    status: str = "ok"


class AnchorCheck(BaseModel):
    name: str
    value: Optional[float] = None
    expected: str
    passed: bool


class BenchReport(BaseModel):
    rows: List[ComparisonRow]
    checks: List[AnchorCheck]
    headline: Dict[str, float] = Field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)
