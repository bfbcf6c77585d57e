"""
Semiconductor physics behind cryogenic threshold shifts.

Intrinsic carrier density uses a Varshni bandgap and T^1.5 band-edge
densities. Dopant ionization solves charge neutrality with Fermi-Dirac
occupancy of the dopant level; it is evaluated in log space because the
ionized fraction and n_i span hundreds of decades between 4 K and 400 K.
"""

import logging
import math
from typing import List, Sequence

import numpy as np
from scipy.special import expit

from app.core.error_handlers import DomainError, SolverError
from app.core.validators import check_temperature, check_temperatures
from app.schemas.physics import (SILICON, ChannelDoping, DepletionDoping,
                                 DopantKind, MosStack, SiliconConstants,
                                 VthCurvePoint)

logger = logging.getLogger(__name__)

BISECTION_TOL = 1e-12
BISECTION_MAX_ITER = 200
RESIDUAL_TOL = 1e-10
T_REF = 298.0


def thermal_energy_ev(t_k: float, si: SiliconConstants = SILICON) -> float:
    """k_B*T in eV."""
    return si.k_b * t_k / si.q


def bandgap(t_k: float, si: SiliconConstants = SILICON) -> float:
    """Varshni bandgap in eV."""
    return si.e_g0 - si.alpha_g * t_k ** 2 / (t_k + si.beta_g)


def log_intrinsic_density(t_k: float, si: SiliconConstants = SILICON) -> float:
    """Natural log of n_i in cm^-3."""
    check_temperature(t_k)
    kt = thermal_energy_ev(t_k, si)
    log_nc_nv = math.log(si.n_c300) + math.log(si.n_v300) + 3.0 * math.log(t_k / 300.0)
    return 0.5 * log_nc_nv - bandgap(t_k, si) / (2.0 * kt)


def intrinsic_density(t_k: float, si: SiliconConstants = SILICON) -> float:
    """
    Intrinsic carrier density n_i(T) in cm^-3.

    Underflows to 0.0 below roughly 8 K; use log_intrinsic_density there.
    """
    return math.exp(log_intrinsic_density(t_k, si))


def _log_band_density(doping: ChannelDoping, t_k: float, si: SiliconConstants) -> float:
    # Majority-carrier band: valence band for acceptors, conduction band for donors.
    n300 = si.n_v300 if doping.dopant_kind == DopantKind.ACCEPTOR else si.n_c300
    return math.log(n300) + 1.5 * math.log(t_k / 300.0)


def _occupancy_residual(log_f: float, log_c: float) -> float:
    # f = 1 / (1 + c*f)  <=>  ln f + ln(1 + c*f) = 0
    return log_f + np.logaddexp(0.0, log_c + log_f)


def ionized_fraction(doping: ChannelDoping, t_k: float, si: SiliconConstants = SILICON) -> float:
    """
    Fraction of dopants ionized at temperature t_k.

    Solves f = 1 / (1 + g_d * exp((E_ion - E_F_offset) / kT)) with
    E_F_offset = kT * ln(N_band / (f * N_dop)) by bisection on ln f.
    """
    check_temperature(t_k)
    kt = thermal_energy_ev(t_k, si)
    log_c = (math.log(doping.g_d) + math.log(doping.n_dop)
             - _log_band_density(doping, t_k, si) + doping.e_ion / kt)

    # f >= 1/(1+c) brackets the root from below, f <= 1 from above.
    lo = -float(np.logaddexp(0.0, log_c))
    hi = 0.0
    iterations = 0
    while hi - lo > BISECTION_TOL and iterations < BISECTION_MAX_ITER:
        mid = 0.5 * (lo + hi)
        if _occupancy_residual(mid, log_c) > 0.0:
            hi = mid
        else:
            lo = mid
        iterations += 1

    log_f = 0.5 * (lo + hi)
    f = math.exp(log_f)
    residual = f - float(expit(-(log_c + log_f)))
    if abs(residual) > RESIDUAL_TOL:
        raise SolverError(
            f"Ionization bisection did not converge at T={t_k:g} K", residual=residual
        )
    return f


def fermi_offset(doping: ChannelDoping, f: float, t_k: float,
                 si: SiliconConstants = SILICON) -> float:
    """Fermi level distance from the majority band edge in eV."""
    kt = thermal_energy_ev(t_k, si)
    return kt * (_log_band_density(doping, t_k, si) - math.log(f * doping.n_dop))


def surface_potential(n_active: float, t_k: float, si: SiliconConstants = SILICON) -> float:
    """phi_S = 2*(kT/q)*ln(N_active/n_i) in volts."""
    check_temperature(t_k)
    log_ratio = math.log(n_active) - log_intrinsic_density(t_k, si)
    if log_ratio < -1e-12:
        raise DomainError(
            f"Active doping {n_active:.3e} cm^-3 is below n_i at T={t_k:g} K",
            error_code="DOPING_BELOW_INTRINSIC",
        )
    return 2.0 * thermal_energy_ev(t_k, si) * max(log_ratio, 0.0)


def freezeout_threshold_voltage(stack: MosStack, t_k: float, si: SiliconConstants = SILICON) -> float:
    """
    Long-channel threshold voltage including dopant freeze-out.

    V_TH = V_FB + phi_S + sqrt(2*q*eps_si*N*phi_S)/C_ox. The surface
    potential always uses the activated doping. The depletion term uses the
    chemical doping by default, since band bending ionizes the dopants
    inside the depletion region; DepletionDoping.ACTIVATED uses the
    activated doping there as well.
    """
    doping = stack.doping
    f = ionized_fraction(doping, t_k, si)
    n_active = f * doping.n_dop
    phi_s = surface_potential(n_active, t_k, si)
    if stack.depletion_doping == DepletionDoping.ACTIVATED:
        n_depl = n_active
    else:
        n_depl = doping.n_dop
    q_dep = math.sqrt(2.0 * si.q * si.eps_si * n_depl * phi_s)
    return stack.v_fb + phi_s + q_dep / stack.c_ox


def vth_freezeout_curve(stack: MosStack, temperatures: Sequence[float],
                        si: SiliconConstants = SILICON) -> List[VthCurvePoint]:
    """Threshold voltage over a temperature grid; deltas are taken against 298 K."""
    temps = check_temperatures(temperatures)
    vths = [freezeout_threshold_voltage(stack, float(t), si) for t in temps]
    ref = freezeout_threshold_voltage(stack, T_REF, si)
    logger.info(f"Freeze-out curve computed over {len(temps)} temperatures")
    return [
        VthCurvePoint(t_k=float(t), vth=v, delta_vth=v - ref)
        for t, v in zip(temps, vths)
    ]
