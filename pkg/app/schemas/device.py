import math
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.validators import validate_temperature_field


class Polarity(str, Enum):
    NMOS = "NMOS"
    PMOS = "PMOS"


class DeviceGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    w_um: float = Field(gt=0)
    l_um: float = Field(gt=0)
    c_ox: float = Field(gt=0, description="Gate oxide capacitance, F/cm^2")


class ModelParams(BaseModel):
    """Compact-model parameter set. Voltages are magnitudes for PMOS."""

    model_config = ConfigDict(frozen=True)

    polarity: Polarity = Polarity.NMOS
    vth0: float = Field(gt=0, lt=1.5, description="Threshold at 298 K, V")
    c_vth: float = Field(description="Threshold temperature coefficient, V/K")
    mu0: float = Field(gt=0, description="Phonon-limited mobility at 298 K, cm^2/Vs")
    alpha_ph: float = Field(ge=0)
    mu_c: float = Field(gt=0, description="Coulomb/roughness-limited mobility, cm^2/Vs")
    n0: float = Field(ge=1.0)
    ss_floor: float = Field(ge=0, description="Cryogenic swing floor, mV/dec")
    v_sat: float = Field(gt=0, description="Saturation velocity, cm/s")
    lambda_clm: float = Field(default=0.0, ge=0, description="Channel-length modulation, 1/V")
    i_off_ref: float = Field(gt=0, description="Leakage density at 298 K, A/um")
    eta: float = Field(gt=0, description="Kelvin per leakage decade")
    theta_mob: float = Field(default=0.0, ge=0, description="Mobility degradation, 1/V")

    @field_validator("c_vth", "alpha_ph", "lambda_clm", "theta_mob", "n0", "ss_floor")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v


# Names that calibration may free.
FITTABLE_PARAMS = (
    "vth0", "c_vth", "mu0", "alpha_ph", "mu_c", "n0", "ss_floor",
    "v_sat", "lambda_clm", "i_off_ref", "eta", "theta_mob",
)


class BiasPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    v_gs: float
    v_ds: float = Field(ge=0)
    t_k: float

    _check_t = field_validator("t_k")(validate_temperature_field)


class TransistorSpec(BaseModel):
    """A parameter set bound to a geometry."""

    model_config = ConfigDict(frozen=True)

    name: str = ""
    params: ModelParams
    geometry: DeviceGeometry


class ReferenceParamLibrary(BaseModel):
    model_config = ConfigDict(frozen=True)

    version: str
    geometry: DeviceGeometry
    sets: Dict[str, ModelParams]

    def names(self) -> List[str]:
        return sorted(self.sets)

    def transistor(self, name: str) -> TransistorSpec:
        from app.core.error_handlers import MissingParameterSetError

        if name not in self.sets:
            raise MissingParameterSetError(name, self.sets)
        return TransistorSpec(name=name, params=self.sets[name], geometry=self.geometry)


class CurrentRequest(BaseModel):
    params: ModelParams
    geometry: DeviceGeometry
    bias: BiasPoint


class CurrentResponse(BaseModel):
    i_ds: float
    g_m: float
    vth: float
    ss_mv_dec: float


class SweepRequest(BaseModel):
    params: ModelParams
    geometry: DeviceGeometry
    v_ds: float = Field(ge=0)
    t_k: float
    v_gs: List[float] = Field(min_length=1)

    _check_t = field_validator("t_k")(validate_temperature_field)


class LinearFit(BaseModel):
    slope: float
    intercept: float
    r2: float


class IdsatOverdriveCurve(BaseModel):
    v_ov: List[float]
    i_dsat: List[float]
    fit: LinearFit


class OutputFamily(BaseModel):
    t_k: float
    v_ds: List[float]
    curves: Dict[str, List[float]]


class LibraryResponse(BaseModel):
    version: str
    names: List[str]
    geometry: DeviceGeometry
    sets: Optional[Dict[str, ModelParams]] = None
