"""
Model calibration against I-V sweep corpora and reference anchors.

Optimisation runs in a transformed space (log for strictly positive
bounds) with bounded Nelder-Mead, seeded restarts and an optional
least-squares polish. Results are deterministic for a given seed.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize

from app.core.error_handlers import CryoToolkitError, InfeasibleAnchorsError
from app.schemas.device import DeviceGeometry, ModelParams, ReferenceParamLibrary
from app.schemas.fitting import (Anchor, AnchorKind, AnchorOutcome, CalibrationReport,
                                 Comparison, FitProblem, FitResult,
                                 ObjectiveBreakdown, SweepError)
from app.schemas.sweep import IVSweep
from app.services.compact_model_service import (drain_current_grid, iv_sweep_synthesize,
                                                on_off_ratio, ss_of_t, vth_of_t)
from app.services.extraction_service import (gm_numeric, vth_constant_current,
                                             vth_y_function)
from app.utils.monitoring import record_fit

logger = logging.getLogger(__name__)

CURRENT_FLOOR = 1e-12
STALL_WINDOW = 20
STALL_REL_IMPROVEMENT = 1e-6
RESTART_SPREAD = 0.1


class ParamCodec:
    """Maps free parameters to and from the optimiser's coordinates."""

    def __init__(self, base: ModelParams, free: Sequence[str], bounds: Dict[str, Tuple[float, float]]):
        self.base = base
        self.free = list(free)
        lower = np.array([bounds[n][0] for n in self.free], dtype=float)
        upper = np.array([bounds[n][1] for n in self.free], dtype=float)
        self.log_mask = lower > 0
        self.lower = np.where(self.log_mask, np.log(np.where(self.log_mask, lower, 1.0)), lower)
        self.upper = np.where(self.log_mask, np.log(np.where(self.log_mask, upper, 1.0)), upper)

    @property
    def bounds(self) -> List[Tuple[float, float]]:
        return list(zip(self.lower, self.upper))

    def encode(self, params: ModelParams) -> np.ndarray:
        values = np.array([getattr(params, n) for n in self.free], dtype=float)
        return np.where(self.log_mask, np.log(np.where(self.log_mask, values, 1.0)), values)

    def decode(self, x: np.ndarray) -> ModelParams:
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        values = np.where(self.log_mask, np.exp(x), x)
        return self.base.model_copy(update={n: float(v) for n, v in zip(self.free, values)})


class _StallMonitor:
    """Nelder-Mead callback keeping a monotone best-objective trace."""

    def __init__(self, trace: List[float]):
        self.trace = trace
        self.history: List[float] = []
        self.stalled = False

    def __call__(self, intermediate_result):
        fun = float(intermediate_result.fun)
        best = min(fun, self.trace[-1]) if self.trace else fun
        self.trace.append(best)
        self.history.append(fun)
        if len(self.history) > STALL_WINDOW:
            old = self.history[-STALL_WINDOW - 1]
            if old - fun <= STALL_REL_IMPROVEMENT * max(abs(old), np.finfo(float).tiny):
                self.stalled = True
                raise StopIteration


def _relative_errors(params: ModelParams, sweeps: Sequence[IVSweep]) -> List[np.ndarray]:
    errors = []
    for sweep in sweeps:
        data = np.asarray(sweep.i_ds, dtype=float)
        model = drain_current_grid(params, sweep.geometry, sweep.v_gs, sweep.v_ds, sweep.t_k)
        errors.append(np.abs(model - data) / np.maximum(np.abs(data), CURRENT_FLOOR))
    return errors


def objective(params: ModelParams, sweeps: Sequence[IVSweep]) -> ObjectiveBreakdown:
    """Mean relative current error over every point, with a per-sweep breakdown."""
    errors = _relative_errors(params, sweeps)
    per_sweep = [
        SweepError(index=k, device_id=s.device_id, t_k=s.t_k, v_ds=s.v_ds,
                   mean_rel_error=float(np.mean(err)))
        for k, (s, err) in enumerate(zip(sweeps, errors))
    ]
    return ObjectiveBreakdown(mean_rel_error=float(np.mean(np.concatenate(errors))),
                              per_sweep=per_sweep)


def _signed_residuals(params: ModelParams, sweeps: Sequence[IVSweep]) -> np.ndarray:
    parts = []
    for sweep in sweeps:
        data = np.asarray(sweep.i_ds, dtype=float)
        model = drain_current_grid(params, sweep.geometry, sweep.v_gs, sweep.v_ds, sweep.t_k)
        parts.append((model - data) / np.maximum(np.abs(data), CURRENT_FLOOR))
    return np.concatenate(parts)


def _nelder_mead(func: Callable[[np.ndarray], float], codec: ParamCodec, x0: np.ndarray,
                 max_iterations: int, restarts: int, rng: np.random.Generator,
                 trace: List[float]) -> Tuple[np.ndarray, float, int, bool, int]:
    best_x = np.asarray(x0, dtype=float)
    best_f = func(best_x)
    trace.append(best_f)
    iterations = 0
    converged = False
    runs = 0
    width = codec.upper - codec.lower
    for r in range(restarts):
        remaining = max_iterations - iterations
        if remaining <= 0:
            break
        if r == 0:
            start = best_x
        else:
            start = np.clip(best_x + rng.normal(0.0, RESTART_SPREAD, best_x.size) * width,
                            codec.lower, codec.upper)
        monitor = _StallMonitor(trace)
        res = minimize(func, start, method="Nelder-Mead", bounds=codec.bounds, callback=monitor,
                       options={"maxiter": remaining, "xatol": 1e-9, "fatol": 1e-12, "adaptive": True})
        runs += 1
        iterations += int(res.nit)
        if monitor.stalled or res.success:
            converged = True
        if res.fun < best_f:
            best_f = float(res.fun)
            best_x = np.asarray(res.x, dtype=float)
        logger.debug(f"Restart {r}: objective {res.fun:.6g} after {res.nit} iterations")
    return best_x, best_f, iterations, converged, runs


def calibrate(problem: FitProblem, seed: int) -> FitResult:
    """
    Fit the free parameters of problem.initial to problem.sweeps.

    The first run starts from the initial values; later restarts perturb the
    best point found so far using a generator seeded with seed.
    """
    sweeps = problem.sweeps
    if not problem.free:
        breakdown = objective(problem.initial, sweeps)
        record_fit(True)
        return FitResult(params=problem.initial, mean_rel_error=breakdown.mean_rel_error,
                         per_sweep=breakdown.per_sweep, iterations=0, converged=True,
                         restarts_run=0, trace=[breakdown.mean_rel_error])

    codec = ParamCodec(problem.initial, problem.free, problem.bounds)
    rng = np.random.default_rng(seed)

    def func(x: np.ndarray) -> float:
        value = float(np.mean(np.concatenate(_relative_errors(codec.decode(x), sweeps))))
        return value if math.isfinite(value) else 1e300

    trace: List[float] = []
    best_x, best_f, iterations, converged, runs = _nelder_mead(
        func, codec, codec.encode(problem.initial), problem.max_iterations,
        problem.restarts, rng, trace,
    )

    polished = False
    if problem.polish:
        margin = 1e-12 * np.maximum(1.0, np.abs(codec.upper - codec.lower))
        x_start = np.clip(best_x, codec.lower + margin, codec.upper - margin)
        try:
            ls = least_squares(lambda x: _signed_residuals(codec.decode(x), sweeps), x_start,
                               bounds=(codec.lower, codec.upper), method="trf",
                               max_nfev=200 * len(codec.free))
            polished_f = func(ls.x)
            if polished_f < best_f:
                best_x, best_f, polished = np.asarray(ls.x), polished_f, True
                trace.append(min(best_f, trace[-1]))
        except (ValueError, CryoToolkitError) as e:
            logger.warning(f"Least-squares polish skipped: {e}")

    params = codec.decode(best_x)
    breakdown = objective(params, sweeps)
    record_fit(converged)
    logger.info(
        f"Calibration finished: mean relative error {breakdown.mean_rel_error:.4g}, "
        f"{iterations} iterations, converged={converged}"
    )
    return FitResult(
        params=params,
        mean_rel_error=breakdown.mean_rel_error,
        per_sweep=breakdown.per_sweep,
        iterations=iterations,
        converged=converged,
        restarts_run=runs,
        polished=polished,
        trace=trace,
    )


# Anchor calibration

ANCHOR_VGS_GRID = np.round(np.arange(-0.4, 0.9 + 1e-9, 0.005), 6)
LINEAR_VGS_GRID = np.round(np.arange(0.0, 0.9 + 1e-9, 0.01), 6)
LINEAR_VDS = 0.05

FREE_BY_KIND = {
    AnchorKind.VTH_CC: ("vth0",),
    AnchorKind.VTH_Y: ("vth0",),
    AnchorKind.SS: ("ss_floor", "n0"),
    AnchorKind.IDSAT_PER_UM: ("v_sat",),
    AnchorKind.ON_OFF: ("vth0",),
    AnchorKind.GM_MAX: ("theta_mob",),
    AnchorKind.VTH_ABS_MAX: ("c_vth",),
}

DEFAULT_BOUNDS = {
    "vth0": (0.01, 0.6),
    "c_vth": (-0.002, 0.002),
    "mu0": (20.0, 1000.0),
    "alpha_ph": (0.0, 3.0),
    "mu_c": (10.0, 5000.0),
    "n0": (1.0, 3.0),
    "ss_floor": (0.0, 60.0),
    "v_sat": (1e6, 1e9),
    "lambda_clm": (0.0, 0.5),
    "i_off_ref": (1e-14, 1e-6),
    "eta": (5.0, 500.0),
    "theta_mob": (0.0, 5.0),
}


def anchor_value(anchor: Anchor, params: ModelParams, geometry: DeviceGeometry) -> float:
    """Evaluate the quantity an anchor constrains."""
    t_k, v_dd = anchor.t_k, anchor.v_dd
    if anchor.kind == AnchorKind.VTH_CC:
        return vth_constant_current(iv_sweep_synthesize(params, geometry, v_dd, t_k, ANCHOR_VGS_GRID))
    if anchor.kind == AnchorKind.VTH_Y:
        return vth_y_function(iv_sweep_synthesize(params, geometry, LINEAR_VDS, t_k, LINEAR_VGS_GRID)).vth
    if anchor.kind == AnchorKind.SS:
        return float(ss_of_t(params, t_k))
    if anchor.kind == AnchorKind.IDSAT_PER_UM:
        # mA/um
        return float(drain_current_grid(params, geometry, v_dd, v_dd, t_k)) / geometry.w_um * 1e3
    if anchor.kind == AnchorKind.ON_OFF:
        return on_off_ratio(params, geometry, v_dd, t_k)
    if anchor.kind == AnchorKind.GM_MAX:
        # mS
        current = drain_current_grid(params, geometry, LINEAR_VGS_GRID, v_dd, t_k)
        return float(np.max(gm_numeric(LINEAR_VGS_GRID, current))) * 1e3
    if anchor.kind == AnchorKind.VTH_ABS_MAX:
        return abs(float(vth_of_t(params, t_k)))
    raise ValueError(f"Unsupported anchor kind {anchor.kind}")


def anchor_met(anchor: Anchor, value: float) -> bool:
    if anchor.comparison == Comparison.AT_LEAST:
        return value >= anchor.target
    if anchor.comparison == Comparison.AT_MOST:
        return value <= anchor.target
    return abs(value - anchor.target) <= anchor.tolerance


def anchor_penalty(anchor: Anchor, value: float) -> float:
    """Zero well inside the accepted region, growing quadratically outside it."""
    scale = abs(anchor.target) or 1.0
    if anchor.comparison == Comparison.AT_LEAST:
        return max(0.0, (1.02 * anchor.target - value) / scale) ** 2
    if anchor.comparison == Comparison.AT_MOST:
        return max(0.0, (value - 0.98 * anchor.target) / scale) ** 2
    tol = anchor.tolerance or 1e-3 * scale
    return max(0.0, abs(value - anchor.target) / tol - 0.5) ** 2


def evaluate_anchors(anchors: Sequence[Anchor], params: ModelParams,
                     geometry: DeviceGeometry) -> List[AnchorOutcome]:
    outcomes = []
    for anchor in anchors:
        try:
            value = anchor_value(anchor, params, geometry)
        except CryoToolkitError as e:
            logger.warning(f"Anchor {anchor.label} could not be evaluated: {e.message}")
            value = float("nan")
        outcomes.append(AnchorOutcome(anchor=anchor, value=value,
                                      met=math.isfinite(value) and anchor_met(anchor, value)))
    return outcomes


def _free_for(anchors: Sequence[Anchor]) -> List[str]:
    free: List[str] = []
    for anchor in anchors:
        for name in FREE_BY_KIND[anchor.kind]:
            if name not in free:
                free.append(name)
    return free


def _calibrate_set(name: str, anchors: Sequence[Anchor], params: ModelParams,
                   geometry: DeviceGeometry, free: Sequence[str], seed: int,
                   max_iterations: int) -> Tuple[ModelParams, List[AnchorOutcome]]:
    outcomes = evaluate_anchors(anchors, params, geometry)
    if all(o.met for o in outcomes) or not free:
        return params, outcomes

    bounds = {}
    for p in free:
        lo, hi = DEFAULT_BOUNDS[p]
        value = getattr(params, p)
        bounds[p] = (min(lo, value), max(hi, value))
    codec = ParamCodec(params, free, bounds)

    def violation(x: np.ndarray) -> float:
        candidate = codec.decode(x)
        total = 0.0
        for anchor in anchors:
            try:
                total += anchor_penalty(anchor, anchor_value(anchor, candidate, geometry))
            except CryoToolkitError:
                total += 1e6
        return total

    trace: List[float] = []
    best_x, best_f, iterations, _, _ = _nelder_mead(
        violation, codec, codec.encode(params), max_iterations, 3,
        np.random.default_rng(seed), trace,
    )
    fitted = codec.decode(best_x)
    logger.info(f"Anchor calibration of {name}: violation {best_f:.4g} after {iterations} iterations")
    return fitted, evaluate_anchors(anchors, fitted, geometry)


def calibrate_reference_sets(anchors: Sequence[Anchor], library: ReferenceParamLibrary,
                             seed: int, free: Optional[Dict[str, Sequence[str]]] = None,
                             max_iterations: int = 600) -> CalibrationReport:
    """
    Adjust each named set until its anchors hold.

    Sets without anchors pass through unchanged. Raises
    InfeasibleAnchorsError listing every anchor still unmet.
    """
    by_set: Dict[str, List[Anchor]] = {}
    for anchor in anchors:
        library.transistor(anchor.set_name)
        by_set.setdefault(anchor.set_name, []).append(anchor)

    params = dict(library.sets)
    outcomes: List[AnchorOutcome] = []
    for name in sorted(by_set):
        set_free = list(free[name]) if free and name in free else _free_for(by_set[name])
        params[name], set_outcomes = _calibrate_set(
            name, by_set[name], params[name], library.geometry, set_free, seed, max_iterations
        )
        outcomes.extend(set_outcomes)

    report = CalibrationReport(params=params, outcomes=outcomes)
    unmet = report.unmet
    if unmet:
        labels = [f"{o.anchor.label} = {o.value:.4g} (target {o.anchor.target:g})" for o in unmet]
        raise InfeasibleAnchorsError(labels, best=report)
    logger.info(f"All {len(outcomes)} anchors met across {len(by_set)} sets")
    return report


def measured_anchor_table() -> List[Anchor]:
    """Targets measured on the cryo-optimized devices."""
    at_least, at_most = Comparison.AT_LEAST, Comparison.AT_MOST
    table = [
        Anchor(set_name="CryoNMOS-ref", kind=AnchorKind.VTH_CC, t_k=77, v_dd=0.9, target=0.109, tolerance=0.015),
        Anchor(set_name="CryoPMOS-ref", kind=AnchorKind.VTH_CC, t_k=77, v_dd=0.9, target=0.171, tolerance=0.015),
        Anchor(set_name="CryoNMOS-ref", kind=AnchorKind.SS, t_k=298, target=105.0, tolerance=5.0),
        Anchor(set_name="CryoNMOS-ref", kind=AnchorKind.SS, t_k=10, target=18.0, tolerance=2.0),
        Anchor(set_name="CryoNMOS-ref", kind=AnchorKind.IDSAT_PER_UM, t_k=77, v_dd=0.9, target=1.6, tolerance=0.16),
        Anchor(set_name="CryoNMOS-ref", kind=AnchorKind.IDSAT_PER_UM, t_k=77, v_dd=0.6, target=0.7, comparison=at_least),
        Anchor(set_name="CryoNMOS-ref", kind=AnchorKind.ON_OFF, t_k=77, v_dd=0.6, target=1e7, comparison=at_least),
        Anchor(set_name="CryoNMOS-ref", kind=AnchorKind.GM_MAX, t_k=77, v_dd=0.9, target=0.25, tolerance=0.0375),
    ]
    for name in ("CryoNMOS-ref", "CryoPMOS-ref"):
        for t_k in (10.0, 77.0, 150.0, 298.0):
            table.append(Anchor(set_name=name, kind=AnchorKind.VTH_ABS_MAX, t_k=t_k,
                                target=0.2, comparison=at_most))
    return table
