from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SiliconConstants(BaseModel):
    """Material constants for bulk silicon (Varshni bandgap, band-edge densities at 300 K)."""

    model_config = ConfigDict(frozen=True)

    q: float = Field(default=1.602176634e-19, gt=0)            # C
    k_b: float = Field(default=1.380649e-23, gt=0)             # J/K
    eps_si: float = Field(default=11.7 * 8.8541878128e-14, gt=0)  # F/cm
    e_g0: float = Field(default=1.17, gt=0)                    # eV
    alpha_g: float = Field(default=4.73e-4, gt=0)              # eV/K
    beta_g: float = Field(default=636.0, gt=0)                 # K
    n_c300: float = Field(default=2.8e19, gt=0)                # cm^-3
    n_v300: float = Field(default=1.04e19, gt=0)               # cm^-3

    @model_validator(mode="after")
    def bandgap_stays_positive(self):
        if self.e_g0 - self.alpha_g * 400.0 ** 2 / (400.0 + self.beta_g) <= 0:
            raise ValueError("bandgap must stay positive up to 400 K")
        return self


SILICON = SiliconConstants()


class DopantKind(str, Enum):
    ACCEPTOR = "acceptor"
    DONOR = "donor"


class ChannelDoping(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_dop: float = Field(gt=0, description="Chemical dopant density, cm^-3")
    e_ion: float = Field(gt=0, lt=0.2, description="Ionization energy, eV")
    dopant_kind: DopantKind = DopantKind.ACCEPTOR
    degeneracy: Optional[Literal[2, 4]] = None

    @property
    def g_d(self) -> int:
        """Degeneracy factor; 4 for acceptors and 2 for donors unless given."""
        if self.degeneracy is not None:
            return self.degeneracy
        return 4 if self.dopant_kind == DopantKind.ACCEPTOR else 2


class DepletionDoping(str, Enum):
    """Doping used inside the depletion-charge term of the threshold equation."""

    CHEMICAL = "chemical"
    ACTIVATED = "activated"


class MosStack(BaseModel):
    model_config = ConfigDict(frozen=True)

    v_fb: float = 0.0
    c_ox: float = Field(gt=0, description="Oxide capacitance, F/cm^2")
    doping: ChannelDoping
    depletion_doping: DepletionDoping = DepletionDoping.CHEMICAL


class VthCurvePoint(BaseModel):
    t_k: float
    vth: float
    delta_vth: float


class VthCurveRequest(BaseModel):
    stack: MosStack
    temperatures: List[float] = Field(min_length=1)


class VthCurveResponse(BaseModel):
    points: List[VthCurvePoint]
