"""
First-order digital benchmarks built on the compact model: inverter delay
from effective currents, ring-oscillator frequency, DFF clock-to-q delay and
a switched-capacitance power envelope.
"""

import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from app.core.error_handlers import DomainError, FailsToOscillateError
from app.core.validators import check_temperature
from app.schemas.circuits import (ComparisonRow, DffSpec, InverterCell,
                                  PowerBreakdown, PowerScenario,
                                  RingOscillatorSpec)
from app.schemas.device import TransistorSpec
from app.services.compact_model_service import (drain_current_grid,
                                                leakage_density, vth_of_t)

logger = logging.getLogger(__name__)

# A cell is stuck when its drive is within this factor of its leakage.
GAIN_COLLAPSE_FACTOR = 10.0
TRANSIENT_STEPS = 1000


def effective_current(device: TransistorSpec, v_dd: float, t_k: float) -> float:
    """I_eff = (I(V_DD, V_DD) + I(V_DD, V_DD/2)) / 2."""
    check_temperature(t_k)
    i = drain_current_grid(device.params, device.geometry, v_dd, [v_dd, v_dd / 2.0], t_k)
    return float(0.5 * (i[0] + i[1]))


def off_current(device: TransistorSpec, v_dd: float, t_k: float) -> float:
    return float(drain_current_grid(device.params, device.geometry, 0.0, v_dd, t_k))


def check_switching(cell: InverterCell, v_dd: float, t_k: float):
    """Raise FailsToOscillateError when the cell cannot switch at (V_DD, T)."""
    vth_sum = float(vth_of_t(cell.nmos.params, t_k) + vth_of_t(cell.pmos.params, t_k))
    if v_dd < vth_sum:
        raise FailsToOscillateError(
            v_dd, t_k, f"V_DD below V_TH,n + |V_TH,p| = {vth_sum:.4f} V"
        )
    leak = off_current(cell.nmos, v_dd, t_k) + off_current(cell.pmos, v_dd, t_k)
    drive = min(effective_current(cell.nmos, v_dd, t_k), effective_current(cell.pmos, v_dd, t_k))
    if drive <= GAIN_COLLAPSE_FACTOR * leak:
        raise FailsToOscillateError(
            v_dd, t_k, f"drive current {drive:.3e} A within {GAIN_COLLAPSE_FACTOR:g}x of leakage {leak:.3e} A"
        )


def inverter_delay(cell: InverterCell, v_dd: float, t_k: float) -> float:
    """t_pd = (t_HL + t_LH)/2 with t = C_load*V_DD/(2*I_eff)."""
    if v_dd <= 0:
        raise DomainError("V_DD must be positive", error_code="INVALID_SUPPLY")
    check_switching(cell, v_dd, t_k)
    t_hl = cell.c_load * v_dd / (2.0 * effective_current(cell.nmos, v_dd, t_k))
    t_lh = cell.c_load * v_dd / (2.0 * effective_current(cell.pmos, v_dd, t_k))
    return 0.5 * (t_hl + t_lh)


def _half_swing_time(device: TransistorSpec, c_load: float, v_dd: float, t_k: float,
                     max_step: float) -> float:
    # The pull network discharges the load from V_DD until it crosses V_DD/2.
    def rhs(_t, v):
        i = drain_current_grid(device.params, device.geometry, v_dd, max(v[0], 0.0), t_k)
        return [-float(i) / c_load]

    def crossing(_t, v):
        return v[0] - 0.5 * v_dd

    crossing.terminal = True
    crossing.direction = -1

    horizon = max_step * TRANSIENT_STEPS * 100
    sol = solve_ivp(rhs, (0.0, horizon), [v_dd], method="RK45",
                    max_step=max_step, events=crossing, rtol=1e-8, atol=1e-12 * v_dd)
    if not sol.t_events[0].size:
        raise FailsToOscillateError(v_dd, t_k, "output never crosses V_DD/2")
    return float(sol.t_events[0][0])


def inverter_step_delay(cell: InverterCell, v_dd: float, t_k: float) -> float:
    """
    Step-response delay from integrating C*dV/dt = -I(V) for each edge.

    Serves as an independent check on inverter_delay.
    """
    estimate = inverter_delay(cell, v_dd, t_k)
    max_step = estimate / TRANSIENT_STEPS
    t_hl = _half_swing_time(cell.nmos, cell.c_load, v_dd, t_k, max_step)
    t_lh = _half_swing_time(cell.pmos, cell.c_load, v_dd, t_k, max_step)
    return 0.5 * (t_hl + t_lh)


def chain_delay(cell: InverterCell, v_dd: float, t_k: float, stages: int) -> float:
    if stages < 1:
        raise DomainError("A chain needs at least one stage", error_code="INVALID_STAGES")
    return stages * inverter_delay(cell, v_dd, t_k)


def ro_frequency(spec: RingOscillatorSpec) -> float:
    """f = 1/(2*N*t_pd); raises FailsToOscillateError for stuck cells."""
    t_pd = inverter_delay(spec.cell, spec.v_dd, spec.t_k)
    return 1.0 / (2.0 * spec.stages * t_pd)


def dff_delay(spec: DffSpec) -> float:
    """Clock-to-q delay of an inverter-equivalent chain."""
    return chain_delay(spec.cell, spec.v_dd, spec.t_k, spec.stages)


def relative_reduction(reference: float, improved: float) -> float:
    """1 - improved/reference; positive when improved is smaller."""
    return 1.0 - improved / reference


def static_current(scenario: PowerScenario) -> float:
    leak_n = float(leakage_density(scenario.nmos.params, scenario.t_k))
    leak_p = float(leakage_density(scenario.pmos.params, scenario.t_k))
    return leak_n * scenario.w_n_total_um + leak_p * scenario.w_p_total_um


def module_power(scenario: PowerScenario) -> PowerBreakdown:
    dynamic = scenario.c_switched * scenario.v_dd ** 2 * scenario.f_clk
    static = scenario.v_dd * static_current(scenario)
    return PowerBreakdown(dynamic_w=dynamic, static_w=static, total_w=dynamic + static)


def calibrate_switched_capacitance(scenario: PowerScenario, target_power_w: float) -> float:
    """Switched capacitance that makes module_power hit target_power_w."""
    static = scenario.v_dd * static_current(scenario)
    if scenario.f_clk <= 0:
        raise DomainError("Calibration needs a positive clock frequency", error_code="INVALID_FREQUENCY")
    if target_power_w <= static:
        raise DomainError(
            f"Target power {target_power_w:.3e} W does not exceed static power {static:.3e} W",
            error_code="TARGET_BELOW_STATIC",
        )
    return (target_power_w - static) / (scenario.v_dd ** 2 * scenario.f_clk)


def _technology_row(name: str, cell: InverterCell, v_dd: float, t_k: float, ro_stages: int,
                    dff_stages: int, power: Optional[PowerScenario]) -> ComparisonRow:
    row = ComparisonRow(technology=name, v_dd=v_dd, t_k=t_k)
    if power is not None:
        scenario = power.model_copy(update={"v_dd": v_dd, "t_k": t_k, "nmos": cell.nmos, "pmos": cell.pmos})
        row.power_w = module_power(scenario).total_w
    try:
        row.f_ro_hz = ro_frequency(RingOscillatorSpec(stages=ro_stages, cell=cell, v_dd=v_dd, t_k=t_k))
        row.dff_delay_s = dff_delay(DffSpec(cell=cell, v_dd=v_dd, t_k=t_k, stages=dff_stages))
    except FailsToOscillateError as e:
        logger.warning(f"{name}: {e.message}")
        row.status = "fails-to-oscillate"
    return row


def compare_technologies(cells: Dict[str, InverterCell], v_dd_grid: Sequence[float],
                         t_grid: Sequence[float], ro_stages: int = 257, dff_stages: int = 6,
                         power: Optional[PowerScenario] = None,
                         max_workers: Optional[int] = None) -> List[ComparisonRow]:
    """
    RO frequency, DFF delay and module power for every technology over a
    (V_DD, T) grid, sorted by (technology, V_DD, T). Stuck cells are
    tabulated with status fails-to-oscillate.
    """
    from app.tasks.batch import run_ordered

    jobs = [
        (name, cells[name], float(v), float(t))
        for name in sorted(cells)
        for v in sorted(v_dd_grid)
        for t in sorted(t_grid)
    ]
    for _, _, _, t in jobs:
        check_temperature(t)
    return run_ordered(
        lambda job: _technology_row(job[0], job[1], job[2], job[3], ro_stages, dff_stages, power),
        jobs,
        max_workers=max_workers,
    )


def comparison_deltas(rows: Iterable[ComparisonRow], baseline: str, candidate: str) -> List[Dict]:
    """Relative frequency, delay and power changes of candidate against baseline at matched bias."""
    index = {(r.technology, r.v_dd, r.t_k): r for r in rows}
    deltas = []
    for (tech, v_dd, t_k), base in sorted(index.items()):
        if tech != baseline:
            continue
        cand = index.get((candidate, v_dd, t_k))
        if cand is None:
            continue
        entry = {"v_dd": v_dd, "t_k": t_k, "frequency_gain": None,
                 "delay_reduction": None, "power_reduction": None}
        if base.f_ro_hz and cand.f_ro_hz:
            entry["frequency_gain"] = cand.f_ro_hz / base.f_ro_hz - 1.0
        if base.dff_delay_s and cand.dff_delay_s:
            entry["delay_reduction"] = relative_reduction(base.dff_delay_s, cand.dff_delay_s)
        if base.power_w and cand.power_w is not None:
            entry["power_reduction"] = relative_reduction(base.power_w, cand.power_w)
        deltas.append(entry)
    return deltas
