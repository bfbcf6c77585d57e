"""
Temperature-aware compact drain-current model.

A single smooth expression covers subthreshold, linear and saturation
operation. PMOS devices are evaluated on voltage and current magnitudes.
"""

import hashlib
import json
import logging
import math
from typing import List, Sequence

import numpy as np
from scipy.constants import e as Q_E, k as K_B

from app.core.error_handlers import DomainError
from app.core.validators import GridValidator, check_temperature, check_temperatures, raise_validation_error_if_any
from app.schemas.device import (BiasPoint, DeviceGeometry, IdsatOverdriveCurve,
                                LinearFit, ModelParams, OutputFamily)
from app.schemas.sweep import IVSweep
from app.utils.monitoring import record_sweep_synthesized

logger = logging.getLogger(__name__)

T_REF = 298.0
LN10 = math.log(10.0)
UM_TO_CM = 1e-4
# Effective thermal voltages added to V_gt in the saturation voltage.
SUBTHRESHOLD_FLOOR = 2.5
# Smoothing exponent of the linear/saturation transition.
SMOOTHING_ORDER = 4.0


def thermal_voltage(t_k):
    """U_T = k_B*T/q in volts."""
    return K_B * np.asarray(t_k, dtype=float) / Q_E


def vth_of_t(params: ModelParams, t_k):
    """Threshold voltage (magnitude) at temperature t_k."""
    return params.vth0 + params.c_vth * (T_REF - np.asarray(t_k, dtype=float))


def ss_of_t(params: ModelParams, t_k):
    """Subthreshold swing in mV/dec with a cryogenic floor."""
    thermal = params.n0 * thermal_voltage(t_k) * LN10 * 1000.0
    return np.sqrt(thermal ** 2 + params.ss_floor ** 2)


def slope_voltage(params: ModelParams, t_k):
    """n_eff*U_T in volts, the exponential slope of the subthreshold current."""
    return ss_of_t(params, t_k) / (LN10 * 1000.0)


def mobility(params: ModelParams, t_k):
    """Low-field mobility: phonon and Coulomb limits combined by Matthiessen's rule."""
    t = np.asarray(t_k, dtype=float)
    mu_ph = params.mu0 * (t / T_REF) ** (-params.alpha_ph)
    return 1.0 / (1.0 / mu_ph + 1.0 / params.mu_c)


def leakage_density(params: ModelParams, t_k):
    """Off-state leakage per micrometre of width, A/um."""
    t = np.asarray(t_k, dtype=float)
    return params.i_off_ref * 10.0 ** ((t - T_REF) / params.eta)


def drain_current_grid(params: ModelParams, geom: DeviceGeometry, v_gs, v_ds, t_k) -> np.ndarray:
    """
    Vectorised drain current in amperes (magnitude).

    Arguments broadcast against each other. Temperatures outside
    [4 K, 400 K] raise DomainError.
    """
    check_temperatures(t_k)
    vgs = np.asarray(v_gs, dtype=float)
    vds = np.asarray(v_ds, dtype=float)
    t = np.asarray(t_k, dtype=float)
    if np.any(vds < 0):
        raise DomainError("V_DS magnitude must be non-negative", error_code="NEGATIVE_VDS")

    n_ut = slope_voltage(params, t)
    vth = vth_of_t(params, t)
    mu = mobility(params, t)

    # overflow-safe softplus
    vgt = n_ut * np.logaddexp(0.0, (vgs - vth) / n_ut)

    l_cm = geom.l_um * UM_TO_CM
    w_cm = geom.w_um * UM_TO_CM
    inv_lec = mu / (l_cm * params.v_sat)
    u_eff = n_ut / params.n0
    g = vgt + SUBTHRESHOLD_FLOOR * u_eff
    vdsat = g / (1.0 + g * inv_lec)
    vdse = vds * vdsat / (vds ** SMOOTHING_ORDER + vdsat ** SMOOTHING_ORDER) ** (1.0 / SMOOTHING_ORDER)

    i_ch = ((w_cm / l_cm) * mu * geom.c_ox * vgt * vdse
            / ((1.0 + vdse * inv_lec) * (1.0 + params.theta_mob * vgt))
            * (1.0 + params.lambda_clm * vds))
    i_leak = geom.w_um * leakage_density(params, t)
    return i_ch + i_leak


def drain_current(params: ModelParams, geom: DeviceGeometry, bias: BiasPoint) -> float:
    return float(drain_current_grid(params, geom, bias.v_gs, bias.v_ds, bias.t_k))


def transconductance(params: ModelParams, geom: DeviceGeometry, bias: BiasPoint) -> float:
    """dI/dV_GS by central difference."""
    h = max(1e-6, 1e-4 * float(slope_voltage(params, bias.t_k)))
    i = drain_current_grid(params, geom, [bias.v_gs - h, bias.v_gs + h], bias.v_ds, bias.t_k)
    return float((i[1] - i[0]) / (2.0 * h))


def on_off_ratio(params: ModelParams, geom: DeviceGeometry, v_dd: float, t_k: float) -> float:
    i = drain_current_grid(params, geom, [v_dd, 0.0], v_dd, t_k)
    return float(i[0] / max(i[1], np.finfo(float).tiny))


def params_fingerprint(params: ModelParams) -> str:
    payload = json.dumps(params.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def iv_sweep_synthesize(params: ModelParams, geom: DeviceGeometry, v_ds: float, t_k: float,
                        v_gs_grid: Sequence[float], device_id: str = None) -> IVSweep:
    """Transfer curve generated from the model."""
    raise_validation_error_if_any({"v_gs": GridValidator.validate_grid(v_gs_grid)})
    check_temperature(t_k)
    grid = np.asarray(v_gs_grid, dtype=float)
    current = drain_current_grid(params, geom, grid, v_ds, t_k)
    record_sweep_synthesized()
    return IVSweep(
        v_ds=v_ds,
        t_k=t_k,
        geometry=geom,
        polarity=params.polarity,
        v_gs=tuple(float(v) for v in grid),
        i_ds=tuple(float(i) for i in current),
        origin=f"synthetic:{params_fingerprint(params)}",
        device_id=device_id,
    )


def output_family(params: ModelParams, geom: DeviceGeometry, t_k: float,
                  v_gs_values: Sequence[float], v_ds_grid: Sequence[float]) -> OutputFamily:
    """I_DS versus V_DS for each gate voltage."""
    raise_validation_error_if_any({"v_ds": GridValidator.validate_grid(v_ds_grid)})
    vds = np.asarray(v_ds_grid, dtype=float)
    curves = {}
    for vgs in v_gs_values:
        current = drain_current_grid(params, geom, vgs, vds, t_k)
        curves[f"{vgs:g}"] = [float(i) for i in current]
    return OutputFamily(t_k=t_k, v_ds=[float(v) for v in vds], curves=curves)


def linear_fit(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(slope=float(slope), intercept=float(intercept), r2=r2)


def current_at_overdrive(params: ModelParams, geom: DeviceGeometry, t_k: float,
                         v_ov, v_ds: float):
    """Drain current at V_GS = V_TH(T) + V_OV."""
    vgs = vth_of_t(params, t_k) + np.asarray(v_ov, dtype=float)
    return drain_current_grid(params, geom, vgs, v_ds, t_k)


def idsat_vs_overdrive(params: ModelParams, geom: DeviceGeometry, t_k: float, v_ds: float,
                       v_ov_grid: Sequence[float]) -> IdsatOverdriveCurve:
    """
    Saturation current against overdrive with its least-squares line.

    A velocity-saturated device gives a straight line (R^2 close to 1).
    """
    raise_validation_error_if_any({"v_ov": GridValidator.validate_grid(v_ov_grid)})
    if len(v_ov_grid) < 2:
        raise DomainError("Need at least two overdrive points", error_code="INVALID_GRID")
    current = current_at_overdrive(params, geom, t_k, v_ov_grid, v_ds)
    return IdsatOverdriveCurve(
        v_ov=[float(v) for v in v_ov_grid],
        i_dsat=[float(i) for i in current],
        fit=linear_fit(v_ov_grid, current),
    )


def present_signed(params: ModelParams, values) -> List[float]:
    """Apply the terminal sign convention for emitted files."""
    sign = -1.0 if params.polarity.value == "PMOS" else 1.0
    return [sign * float(v) for v in np.atleast_1d(values)]
