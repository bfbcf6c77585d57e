"""
Figure-of-merit extraction from measured or synthetic transfer curves.

All extractors work on IVSweep magnitudes, so NMOS and PMOS data share one
code path. Failures raise ExtractionError subclasses; extract_all collects
them into the report instead of aborting.
"""

import logging
import math
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from app.core.error_handlers import (DegenerateSeriesError,
                                     DomainError, ExtractionError,
                                     InsufficientDecadesError, NoCrossingError,
                                     UnreachableRatioError, WindowDetectionError)
from app.schemas.sweep import (ExtractionReport, IVSweep, LeakageFit, LeakagePoint,
                               LeakageSeries, YFunctionResult)
from app.utils.monitoring import record_extraction

logger = logging.getLogger(__name__)

T_REF = 298.0
# Constant-current criterion, amperes per square (times W/L).
I_CRIT_PER_SQUARE = 1e-8
LINEAR_VDS_MAX = 0.1
MIN_SWEEP_POINTS = 8
MIN_SUBTHRESHOLD_DECADES = 2.0
Y_MIN_R2 = 0.98
Y_TOP_EXCLUDED = 0.10
Y_MIN_WINDOW_SHARE = 0.30
DEFAULT_ON_OFF_RATIO = 1e7


def critical_current(sweep: IVSweep) -> float:
    return I_CRIT_PER_SQUARE * sweep.geometry.w_um / sweep.geometry.l_um


def _arrays(sweep: IVSweep) -> Tuple[np.ndarray, np.ndarray]:
    return np.asarray(sweep.v_gs, dtype=float), np.asarray(sweep.i_ds, dtype=float)


def _require_points(sweep: IVSweep, count: int = MIN_SWEEP_POINTS):
    if len(sweep) < count:
        raise DomainError(
            f"Sweep has {len(sweep)} points, at least {count} are required",
            error_code="SWEEP_TOO_SHORT",
        )


def _log_interp_at(v: np.ndarray, log_i: np.ndarray, v_at: float) -> float:
    if not v[0] <= v_at <= v[-1]:
        raise DomainError(
            f"Sweep does not cover V_GS={v_at:g} V", error_code="BIAS_NOT_COVERED"
        )
    return float(np.interp(v_at, v, log_i))


def gm_numeric(v_gs, i_ds) -> np.ndarray:
    """Transconductance by central differences, one-sided at the ends."""
    v = np.asarray(v_gs, dtype=float)
    i = np.asarray(i_ds, dtype=float)
    if v.size < 3:
        raise DomainError("Transconductance needs at least three points", error_code="SWEEP_TOO_SHORT")
    gm = np.empty_like(i)
    gm[1:-1] = (i[2:] - i[:-2]) / (v[2:] - v[:-2])
    gm[0] = (i[1] - i[0]) / (v[1] - v[0])
    gm[-1] = (i[-1] - i[-2]) / (v[-1] - v[-2])
    return gm


def vth_constant_current(sweep: IVSweep) -> float:
    """V_GS at which I_DS first reaches 1e-8*W/L, interpolated in log current."""
    v, i = _arrays(sweep)
    i_crit = critical_current(sweep)
    if i[0] == i_crit:
        return float(v[0])
    if i[0] > i_crit:
        raise NoCrossingError(
            f"Sweep starts above the critical current {i_crit:.3e} A at V_GS={v[0]:g} V"
        )
    log_i = np.log10(i)
    log_crit = math.log10(i_crit)
    for k in range(1, len(v)):
        if i[k] == i_crit:
            return float(v[k])
        if i[k - 1] < i_crit < i[k]:
            frac = (log_crit - log_i[k - 1]) / (log_i[k] - log_i[k - 1])
            return float(v[k - 1] + frac * (v[k] - v[k - 1]))
    raise NoCrossingError(f"Sweep never reaches the critical current {i_crit:.3e} A")


def _window_r2(x: np.ndarray, y: np.ndarray, min_len: int) -> Tuple[float, int, int]:
    """Best R^2 over contiguous windows of at least min_len points."""
    cx = np.concatenate(([0.0], np.cumsum(x)))
    cy = np.concatenate(([0.0], np.cumsum(y)))
    cxx = np.concatenate(([0.0], np.cumsum(x * x)))
    cyy = np.concatenate(([0.0], np.cumsum(y * y)))
    cxy = np.concatenate(([0.0], np.cumsum(x * y)))

    best = (-np.inf, 0, min_len - 1)
    m = len(x)
    for a in range(m - min_len + 1):
        b = np.arange(a + min_len, m + 1)
        n = b - a
        sx = cx[b] - cx[a]
        sy = cy[b] - cy[a]
        sxx = cxx[b] - cxx[a] - sx * sx / n
        syy = cyy[b] - cyy[a] - sy * sy / n
        sxy = cxy[b] - cxy[a] - sx * sy / n
        denom = sxx * syy
        r2 = np.where(denom > 0, sxy * sxy / np.where(denom > 0, denom, 1.0), 0.0)
        k = int(np.argmax(r2))
        if r2[k] > best[0] + 1e-12:
            best = (float(r2[k]), a, int(b[k]) - 1)
    return best


def vth_y_function(sweep: IVSweep) -> YFunctionResult:
    """
    Threshold and channel mobility from Y = I_DS/sqrt(g_m).

    Works on linear-regime sweeps (V_DS <= 0.1 V). The fit window is the
    most linear contiguous run of at least 30% of the above-threshold
    points, ignoring the top 10% of gate voltages.
    """
    if sweep.v_ds > LINEAR_VDS_MAX:
        raise DomainError(
            f"Y-function needs a linear-regime sweep (V_DS <= {LINEAR_VDS_MAX} V), got {sweep.v_ds:g} V",
            error_code="NOT_LINEAR_REGIME",
        )
    _require_points(sweep)
    v, i = _arrays(sweep)
    gm = gm_numeric(v, i)

    # Turn-on: steepest rise of g_m before its maximum.
    gm_max = float(np.max(gm))
    k_peak = int(np.argmax(gm >= gm_max * (1.0 - 1e-6)))
    dgm = gm_numeric(v, gm)
    start = int(np.argmax(dgm[:k_peak + 1]))

    above = np.array([k for k in range(start, len(v)) if gm[k] > 0], dtype=int)
    keep = above[:len(above) - int(Y_TOP_EXCLUDED * len(above))]
    min_len = max(3, int(math.ceil(Y_MIN_WINDOW_SHARE * len(above))))
    if len(keep) < min_len:
        raise WindowDetectionError(
            f"Only {len(keep)} above-threshold points, need {min_len} for the Y-function window"
        )

    x = v[keep]
    y = i[keep] / np.sqrt(gm[keep])
    r2, a, b = _window_r2(x, y, min_len)
    if r2 < Y_MIN_R2:
        raise WindowDetectionError(f"No linear Y-function window (best R^2={r2:.4f})")

    slope, intercept = np.polyfit(x[a:b + 1], y[a:b + 1], 1)
    if slope <= 0:
        raise WindowDetectionError("Y-function slope is not positive")
    geom = sweep.geometry
    mu_ch = slope ** 2 * geom.l_um / (geom.c_ox * geom.w_um * sweep.v_ds)
    return YFunctionResult(
        vth=float(-intercept / slope),
        mu_ch=float(mu_ch),
        r2=r2,
        window=(float(x[a]), float(x[b])),
    )


def subthreshold_swing(sweep: IVSweep) -> float:
    """Minimum gate-voltage span of one current decade below the critical current, mV/dec."""
    v, i = _arrays(sweep)
    log_i = np.log10(i)
    log_crit = math.log10(critical_current(sweep))
    below = log_i < log_crit
    if not np.any(below) or log_crit - float(np.min(log_i[below])) < MIN_SUBTHRESHOLD_DECADES:
        raise InsufficientDecadesError(
            f"Sweep spans fewer than {MIN_SUBTHRESHOLD_DECADES:g} decades below the critical current"
        )

    best = math.inf
    for s in range(len(v) - 1):
        target = log_i[s] + 1.0
        if target > log_crit:
            continue
        for j in range(s + 1, len(v)):
            if log_i[j] >= target:
                frac = (target - log_i[j - 1]) / (log_i[j] - log_i[j - 1])
                v_end = v[j - 1] + frac * (v[j] - v[j - 1])
                best = min(best, v_end - v[s])
                break
    if not math.isfinite(best):
        raise InsufficientDecadesError("No complete subthreshold decade inside the sweep")
    return float(best * 1000.0)


def overdrive_for_ratio(sweep: IVSweep, ratio: float) -> float:
    """
    Overdrive V_GS* - V_TH_cc at which I_DS reaches ratio times I_DS(V_GS=0).
    """
    if ratio < 1.0:
        raise DomainError("Current ratio must be at least 1", error_code="INVALID_RATIO")
    v, i = _arrays(sweep)
    log_i = np.log10(i)
    log_i0 = _log_interp_at(v, log_i, 0.0)
    target = log_i0 + math.log10(ratio)

    v_star = None
    if ratio == 1.0:
        v_star = 0.0
    else:
        prev_v, prev_log = 0.0, log_i0
        for k in np.nonzero(v > 0.0)[0]:
            if log_i[k] >= target:
                frac = (target - prev_log) / (log_i[k] - prev_log)
                v_star = prev_v + frac * (v[k] - prev_v)
                break
            prev_v, prev_log = v[k], log_i[k]
    if v_star is None:
        raise UnreachableRatioError(
            f"Current ratio {ratio:.3g} not reached within the sweep (max {10 ** (log_i[-1] - log_i0):.3g})"
        )
    return float(v_star - vth_constant_current(sweep))


def fit_leakage_eta(series: LeakageSeries) -> LeakageFit:
    """Fit log10(I_off) linear in T: eta is kelvin per decade, i_off_ref the 298 K value."""
    t = np.array([p.t_k for p in series.points], dtype=float)
    log_i = np.log10([p.i_off for p in series.points])
    if np.ptp(t) == 0.0:
        raise DegenerateSeriesError("Leakage series has no temperature spread")
    slope, intercept = np.polyfit(t, log_i, 1)
    if slope <= 0:
        raise DegenerateSeriesError("Leakage does not increase with temperature")
    resid = log_i - (slope * t + intercept)
    ss_tot = float(np.sum((log_i - log_i.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return LeakageFit(
        eta=float(1.0 / slope),
        i_off_ref=float(10.0 ** (intercept + slope * T_REF)),
        r2=r2,
    )


def zero_bias_current(sweep: IVSweep) -> float:
    v, i = _arrays(sweep)
    return float(10.0 ** _log_interp_at(v, np.log10(i), 0.0))


def extract_leakage_series(sweeps: Iterable[IVSweep]) -> LeakageSeries:
    """Zero-bias current density (A/um) of each sweep, ordered by temperature."""
    points = [
        LeakagePoint(t_k=s.t_k, i_off=zero_bias_current(s) / s.geometry.w_um)
        for s in sweeps
    ]
    points.sort(key=lambda p: p.t_k)
    return LeakageSeries(points=tuple(points))


def peak_transconductance(sweep: IVSweep) -> Tuple[float, float]:
    """Maximum g_m and the gate voltage where it occurs."""
    v, i = _arrays(sweep)
    gm = gm_numeric(v, i)
    k = int(np.argmax(gm))
    return float(gm[k]), float(v[k])


def gm_max_gain(sweep_cold: IVSweep, sweep_warm: IVSweep) -> float:
    return peak_transconductance(sweep_cold)[0] / peak_transconductance(sweep_warm)[0]


def _attempt(name: str, fn: Callable, errors: Dict[str, str]):
    try:
        result = fn()
        record_extraction(name, True)
        return result
    except (ExtractionError, DomainError) as e:
        logger.warning(f"Extractor {name} failed: {e.message}")
        record_extraction(name, False)
        errors[name] = f"{e.error_code}: {e.message}"
        return None


def _fill_linear(report: Dict, sweep: IVSweep, errors: Dict[str, str]):
    y = _attempt("vth_y", lambda: vth_y_function(sweep), errors)
    if y is not None:
        report.update(vth_y=y.vth, mu_ch=y.mu_ch, y_window=y.window, y_r2=y.r2)


def _fill_saturation(report: Dict, sweep: IVSweep, ratio: float, errors: Dict[str, str]):
    report["vth_cc"] = _attempt("vth_cc", lambda: vth_constant_current(sweep), errors)
    report["ss_mv_dec"] = _attempt("ss", lambda: subthreshold_swing(sweep), errors)
    peak = _attempt("gm_max", lambda: peak_transconductance(sweep), errors)
    if peak is not None:
        report["gm_max"], report["gm_max_vgs"] = peak
    report["i_off"] = _attempt("i_off", lambda: zero_bias_current(sweep), errors)
    report["v_ov_at_ratio"] = _attempt(
        "v_ov", lambda: overdrive_for_ratio(sweep, ratio), errors
    )


def extract_all(linear: IVSweep, saturation: IVSweep,
                ratio: float = DEFAULT_ON_OFF_RATIO) -> ExtractionReport:
    """
    Run every extractor on a linear/saturation pair of one device.

    Individual extractor failures leave their fields empty and are listed
    under errors.
    """
    if linear.geometry != saturation.geometry:
        raise DomainError("Linear and saturation sweeps have different geometries",
                          error_code="SWEEP_MISMATCH")
    if abs(linear.t_k - saturation.t_k) > 1e-9:
        raise DomainError("Linear and saturation sweeps have different temperatures",
                          error_code="SWEEP_MISMATCH")

    errors: Dict[str, str] = {}
    fields: Dict = {}
    _fill_linear(fields, linear, errors)
    _fill_saturation(fields, saturation, ratio, errors)
    device_id = saturation.device_id or linear.device_id or "device"
    if errors:
        logger.warning(f"Partial extraction for {device_id}: {sorted(errors)}")
    return ExtractionReport(device_id=device_id, t_k=saturation.t_k, errors=errors, **fields)


def extract_sweep(sweep: IVSweep, ratio: float = DEFAULT_ON_OFF_RATIO,
                  device_id: Optional[str] = None) -> ExtractionReport:
    """Run the extractors that apply to a single sweep's drain bias."""
    errors: Dict[str, str] = {}
    fields: Dict = {}
    if sweep.v_ds <= LINEAR_VDS_MAX:
        _fill_linear(fields, sweep, errors)
        fields["vth_cc"] = _attempt("vth_cc", lambda: vth_constant_current(sweep), errors)
        peak = _attempt("gm_max", lambda: peak_transconductance(sweep), errors)
        if peak is not None:
            fields["gm_max"], fields["gm_max_vgs"] = peak
    else:
        _fill_saturation(fields, sweep, ratio, errors)
    return ExtractionReport(
        device_id=device_id or sweep.device_id or "device",
        t_k=sweep.t_k,
        errors=errors,
        **fields,
    )


def extract_many(sweeps: List[Tuple[str, IVSweep]], ratio: float = DEFAULT_ON_OFF_RATIO,
                 max_workers: int = 1) -> List[ExtractionReport]:
    """Per-sweep reports, sorted by device id and temperature."""
    from app.tasks.batch import run_ordered

    ordered = sorted(sweeps, key=lambda item: (item[0], item[1].t_k))
    reports = run_ordered(
        lambda item: extract_sweep(item[1], ratio=ratio, device_id=item[0]),
        ordered,
        max_workers=max_workers,
    )
    return reports
