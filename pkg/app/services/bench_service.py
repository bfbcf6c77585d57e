"""
End-to-end technology benchmark: comparison table over a (V_DD, T) grid
plus pass/fail checks of the measured anchors against the reference
library.
"""

import logging
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from app.core.error_handlers import FailsToOscillateError, ParseError
from app.schemas.circuits import (AnchorCheck, BenchReport, DffSpec, InverterCell,
                                  PowerScenario, RingOscillatorSpec, Technology)
from app.schemas.device import ReferenceParamLibrary
from app.services.circuit_service import (calibrate_switched_capacitance,
                                          compare_technologies, dff_delay,
                                          module_power, relative_reduction,
                                          ro_frequency)
from app.services.fitting_service import evaluate_anchors, measured_anchor_table
from app.utils.monitoring import record_bench_run
from app.utils.param_files import ConfigDocument, Section, read_config

logger = logging.getLogger(__name__)


class PowerConfig(BaseModel):
    f_clk_hz: float = Field(gt=0)
    t_k: float = 77.0
    w_n_total_um: float = Field(default=0.0, ge=0)
    w_p_total_um: float = Field(default=0.0, ge=0)
    reference_technology: str
    reference_v_dd: float = Field(gt=0)
    reference_power_w: float = Field(gt=0)
    candidate_technology: str
    candidate_v_dd: float = Field(gt=0)


class BenchConfig(BaseModel):
    ro_stages: int = 257
    dff_stages: int = 6
    c_load_f: float = Field(gt=0)
    v_dd: List[float]
    t_k: List[float]
    baseline: str
    candidate: str
    technologies: Dict[str, Technology]
    power: Optional[PowerConfig] = None


def _floats(section: Section, key: str, path: str) -> List[float]:
    try:
        return [float(v) for v in section.list_of(key)]
    except ValueError:
        raise ParseError(path, section.entries[key][1], f"Invalid number list for '{key}'")


def bench_config_from_document(doc: ConfigDocument) -> BenchConfig:
    bench = doc.first("bench")
    if bench is None:
        raise ParseError(doc.path, 1, "Missing [bench] section")
    for key in ("c_load_f", "v_dd", "t_k", "baseline", "candidate"):
        if bench.get(key) is None:
            raise ParseError(doc.path, bench.line, f"Missing required key '{key}' in [bench]")

    technologies = {}
    for section in doc.find("technology"):
        if not section.name or section.get("nmos") is None or section.get("pmos") is None:
            raise ParseError(doc.path, section.line, "[technology NAME] needs nmos and pmos keys")
        technologies[section.name] = Technology(name=section.name, nmos=section.get("nmos"),
                                                pmos=section.get("pmos"))

    power = None
    power_section = doc.first("power")
    if power_section is not None:
        power = PowerConfig(**{k: v for k, (v, _) in power_section.entries.items()})

    return BenchConfig(
        ro_stages=int(bench.get("ro_stages", "257")),
        dff_stages=int(bench.get("dff_stages", "6")),
        c_load_f=float(bench.get("c_load_f")),
        v_dd=_floats(bench, "v_dd", doc.path),
        t_k=_floats(bench, "t_k", doc.path),
        baseline=bench.get("baseline"),
        candidate=bench.get("candidate"),
        technologies=technologies,
        power=power,
    )


def read_bench_config(path) -> BenchConfig:
    return bench_config_from_document(read_config(path))


def build_cells(config: BenchConfig, library: ReferenceParamLibrary) -> Dict[str, InverterCell]:
    """Resolve every technology against the library; missing sets raise."""
    return {
        name: InverterCell(
            nmos=library.transistor(tech.nmos),
            pmos=library.transistor(tech.pmos),
            c_load=config.c_load_f,
        )
        for name, tech in sorted(config.technologies.items())
    }


def calibrated_power_scenario(config: BenchConfig, cells: Dict[str, InverterCell]) -> Optional[PowerScenario]:
    """Power scenario with switched capacitance calibrated at the reference point."""
    if config.power is None:
        return None
    pc = config.power
    ref_cell = cells[pc.reference_technology]
    scenario = PowerScenario(
        f_clk=pc.f_clk_hz, v_dd=pc.reference_v_dd, t_k=pc.t_k, c_switched=0.0,
        nmos=ref_cell.nmos, pmos=ref_cell.pmos,
        w_n_total_um=pc.w_n_total_um, w_p_total_um=pc.w_p_total_um,
    )
    c_sw = calibrate_switched_capacitance(scenario, pc.reference_power_w)
    return scenario.model_copy(update={"c_switched": c_sw})


def _check(name: str, value: Optional[float], expected: str, passed: bool) -> AnchorCheck:
    return AnchorCheck(name=name, value=value, expected=expected, passed=bool(passed))


def circuit_checks(config: BenchConfig, cells: Dict[str, InverterCell],
                   power: Optional[PowerScenario]) -> Tuple[List[AnchorCheck], Dict[str, float]]:
    checks: List[AnchorCheck] = []
    headline: Dict[str, float] = {}
    base = cells[config.baseline]
    cand = cells[config.candidate]

    for v_dd in (0.6, 0.7, 0.8, 0.9):
        try:
            f = ro_frequency(RingOscillatorSpec(stages=config.ro_stages, cell=cand, v_dd=v_dd, t_k=77.0))
        except FailsToOscillateError:
            f = None
        checks.append(_check(f"{config.candidate} RO frequency at {v_dd:g} V, 77 K (MHz)",
                             None if f is None else f / 1e6, "within [200, 600]",
                             f is not None and 200e6 <= f <= 600e6))

    try:
        ro_frequency(RingOscillatorSpec(stages=config.ro_stages, cell=base, v_dd=0.6, t_k=77.0))
        stuck = False
    except FailsToOscillateError:
        stuck = True
    checks.append(_check(f"{config.baseline} RO at 0.6 V, 77 K", None, "fails to oscillate", stuck))

    f_base = ro_frequency(RingOscillatorSpec(stages=config.ro_stages, cell=base, v_dd=0.9, t_k=77.0))
    f_cand = ro_frequency(RingOscillatorSpec(stages=config.ro_stages, cell=cand, v_dd=0.9, t_k=77.0))
    headline["ro_frequency_ratio"] = f_cand / f_base
    checks.append(_check("RO frequency ratio at 0.9 V, 77 K", f_cand / f_base, ">= 1.20",
                         f_cand / f_base >= 1.20))

    d_base = dff_delay(DffSpec(cell=base, v_dd=0.9, t_k=77.0, stages=config.dff_stages))
    d_cand = dff_delay(DffSpec(cell=cand, v_dd=0.9, t_k=77.0, stages=config.dff_stages))
    reduction = relative_reduction(d_base, d_cand)
    headline["dff_delay_reduction"] = reduction
    checks.append(_check("DFF delay reduction at 0.9 V, 77 K", reduction, "within [0.15, 0.30]",
                         0.15 <= reduction <= 0.30))

    if power is not None and config.power is not None:
        pc = config.power
        cand_cell = cells[pc.candidate_technology]
        cand_power = module_power(power.model_copy(update={
            "v_dd": pc.candidate_v_dd, "nmos": cand_cell.nmos, "pmos": cand_cell.pmos,
        })).total_w
        headline["aes_power_w"] = cand_power
        headline["aes_power_reduction"] = relative_reduction(pc.reference_power_w, cand_power)
        checks.append(_check("AES power (mW)", cand_power * 1e3, "1.28 +/- 15%",
                             abs(cand_power * 1e3 - 1.28) <= 0.15 * 1.28))
        checks.append(_check("AES power reduction", headline["aes_power_reduction"], "0.37 +/- 0.08",
                             abs(headline["aes_power_reduction"] - 0.37) <= 0.08))
    return checks, headline


def device_checks(library: ReferenceParamLibrary) -> List[AnchorCheck]:
    checks = []
    for anchor in measured_anchor_table():
        outcome = evaluate_anchors([anchor], library.sets[anchor.set_name], library.geometry)[0]
        if anchor.comparison.value == "within":
            expected = f"{anchor.target:g} +/- {anchor.tolerance:g}"
        elif anchor.comparison.value == "at_least":
            expected = f">= {anchor.target:g}"
        else:
            expected = f"<= {anchor.target:g}"
        checks.append(_check(anchor.label, outcome.value, expected, outcome.met))
    return checks


def run_bench(config: BenchConfig, library: ReferenceParamLibrary,
              max_workers: Optional[int] = None) -> BenchReport:
    cells = build_cells(config, library)
    for name in (config.baseline, config.candidate):
        if name not in cells:
            raise ParseError("bench", 0, f"Technology {name} is not defined")
    power = calibrated_power_scenario(config, cells)
    rows = compare_technologies(cells, config.v_dd, config.t_k, ro_stages=config.ro_stages,
                                dff_stages=config.dff_stages, power=power, max_workers=max_workers)
    checks = device_checks(library)
    more, headline = circuit_checks(config, cells, power)
    checks.extend(more)
    record_bench_run()
    passed = sum(c.passed for c in checks)
    logger.info(f"Bench finished: {len(rows)} rows, {passed}/{len(checks)} anchors passed")
    return BenchReport(rows=rows, checks=checks, headline=headline)
