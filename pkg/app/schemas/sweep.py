from typing import Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.validators import GridValidator, validate_temperature_field
from app.schemas.device import DeviceGeometry, Polarity


class IVSweep(BaseModel):
    """
    One transfer curve at fixed V_DS and T.

    Voltages and currents are stored as magnitudes; PMOS signs exist only in
    emitted files.
    """

    model_config = ConfigDict(frozen=True)

    v_ds: float = Field(ge=0)
    t_k: float
    geometry: DeviceGeometry
    polarity: Polarity = Polarity.NMOS
    v_gs: Tuple[float, ...] = Field(min_length=1)
    i_ds: Tuple[float, ...] = Field(min_length=1)
    origin: str = "measured"
    device_id: Optional[str] = None

    _check_t = field_validator("t_k")(validate_temperature_field)

    @model_validator(mode="after")
    def check_series(self):
        if len(self.v_gs) != len(self.i_ds):
            raise ValueError("v_gs and i_ds must have the same length")
        errors = GridValidator.validate_grid(self.v_gs)
        if errors:
            raise ValueError("; ".join(errors))
        if any(not (i > 0) for i in self.i_ds):
            raise ValueError("drain currents must be positive")
        return self

    def __len__(self) -> int:
        return len(self.v_gs)


class ExtractionReport(BaseModel):
    """Figures of merit extracted from a linear and/or saturation sweep."""

    device_id: str
    t_k: float
    vth_cc: Optional[float] = None
    vth_y: Optional[float] = None
    mu_ch: Optional[float] = None
    ss_mv_dec: Optional[float] = None
    gm_max: Optional[float] = None
    gm_max_vgs: Optional[float] = None
    i_off: Optional[float] = None
    v_ov_at_ratio: Optional[float] = None
    y_window: Optional[Tuple[float, float]] = None
    y_r2: Optional[float] = None
    errors: Dict[str, str] = Field(default_factory=dict)

    @property
    def is_complete(self) -> bool:
        return not self.errors


class YFunctionResult(BaseModel):
    vth: float
    mu_ch: float
    r2: float
    window: Tuple[float, float]


class LeakagePoint(BaseModel):
    t_k: float
    i_off: float = Field(gt=0)


class LeakageSeries(BaseModel):
    model_config = ConfigDict(frozen=True)

    points: Tuple[LeakagePoint, ...] = Field(min_length=2)


class LeakageFit(BaseModel):
    eta: float
    i_off_ref: float
    r2: float


class ExtractionRequest(BaseModel):
    linear: IVSweep
    saturation: IVSweep
    ratio: float = Field(default=1e7, ge=1)
