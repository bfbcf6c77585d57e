"""
CSV/JSON emission for extraction reports, fit error tables, model curves and
bench comparisons. Output is deterministic: fixed column order, 9 significant
digits, no timestamps.
"""

import io
import json
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import pandas as pd

from app.core.error_handlers import ParseError
from app.schemas.circuits import AnchorCheck, ComparisonRow
from app.schemas.fitting import FitResult
from app.schemas.physics import VthCurvePoint
from app.schemas.sweep import ExtractionReport
from app.utils.param_files import SIG_DIGITS, format_float

REPORT_COLUMNS = (
    "device_id", "T_K", "vth_cc_V", "vth_y_V", "mu_ch_cm2_Vs", "ss_mV_dec",
    "gm_max_S", "gm_max_vgs_V", "i_off_A", "v_ov_at_ratio_V",
    "y_window_start_V", "y_window_stop_V", "y_r2", "errors",
)
COMPARISON_COLUMNS = ("technology", "V_DD_V", "T_K", "f_RO_Hz", "dff_delay_s", "power_W", "status")
FIT_ERROR_COLUMNS = ("index", "device_id", "T_K", "vds_V", "mean_rel_error")
VTH_CURVE_COLUMNS = ("T_K", "VTH_V", "dVTH_V")


def frame_to_csv(frame: pd.DataFrame, digits: int = SIG_DIGITS) -> str:
    return frame.to_csv(index=False, float_format=f"%.{digits}g", lineterminator="\n")


def _table(columns: Sequence[str], rows: Iterable[Sequence], numeric: Sequence[str]) -> str:
    frame = pd.DataFrame(list(rows), columns=list(columns))
    for column in numeric:
        frame[column] = pd.to_numeric(frame[column])
    return frame_to_csv(frame)


def report_row(report: ExtractionReport) -> List:
    window = report.y_window or (None, None)
    errors = ";".join(f"{k}={v}" for k, v in sorted(report.errors.items()))
    return [
        report.device_id, report.t_k, report.vth_cc, report.vth_y, report.mu_ch,
        report.ss_mv_dec, report.gm_max, report.gm_max_vgs, report.i_off,
        report.v_ov_at_ratio, window[0], window[1], report.y_r2, errors,
    ]


def dump_reports_csv(reports: Sequence[ExtractionReport]) -> str:
    return _table(REPORT_COLUMNS, (report_row(r) for r in reports), REPORT_COLUMNS[1:-1])


def parse_reports_csv(text: str, path: str = "<string>") -> List[ExtractionReport]:
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ParseError(path, 1, "Unexpected report header")
    except pd.errors.ParserError as e:
        raise ParseError(path, 0, f"Malformed report: {e}")
    if tuple(frame.columns) != REPORT_COLUMNS:
        raise ParseError(path, 1, "Unexpected report header")

    reports = []
    for position, value in enumerate(frame.to_dict(orient="records")):
        if any(not isinstance(v, str) for v in value.values()):
            raise ParseError(path, position + 2, "Wrong column count")

        def num(key: str) -> Optional[float]:
            return float(value[key]) if value[key] != "" else None

        errors: Dict[str, str] = {}
        if value["errors"]:
            for item in value["errors"].split(";"):
                key, _, message = item.partition("=")
                errors[key] = message
        window = None
        if value["y_window_start_V"] != "":
            window = (num("y_window_start_V"), num("y_window_stop_V"))
        try:
            reports.append(ExtractionReport(
                device_id=value["device_id"], t_k=float(value["T_K"]),
                vth_cc=num("vth_cc_V"), vth_y=num("vth_y_V"), mu_ch=num("mu_ch_cm2_Vs"),
                ss_mv_dec=num("ss_mV_dec"), gm_max=num("gm_max_S"), gm_max_vgs=num("gm_max_vgs_V"),
                i_off=num("i_off_A"), v_ov_at_ratio=num("v_ov_at_ratio_V"),
                y_window=window, y_r2=num("y_r2"), errors=errors,
            ))
        except ValueError as e:
            raise ParseError(path, position + 2, f"Invalid report row: {e}")
    return reports


def dump_fit_errors_csv(result: FitResult) -> str:
    rows = (
        (e.index, e.device_id or "", e.t_k, e.v_ds, e.mean_rel_error)
        for e in result.per_sweep
    )
    return _table(FIT_ERROR_COLUMNS, rows, FIT_ERROR_COLUMNS[2:])


def comparison_row(row: ComparisonRow) -> List:
    return [row.technology, row.v_dd, row.t_k, row.f_ro_hz, row.dff_delay_s, row.power_w, row.status]


def dump_comparison_csv(rows: Sequence[ComparisonRow]) -> str:
    return _table(COMPARISON_COLUMNS, (comparison_row(r) for r in rows), COMPARISON_COLUMNS[1:-1])


def dump_vth_curve_csv(curve: Sequence[VthCurvePoint]) -> str:
    rows = ((p.t_k, p.vth, p.delta_vth) for p in curve)
    return _table(VTH_CURVE_COLUMNS, rows, VTH_CURVE_COLUMNS)


def dump_output_family_csv(v_ds: Sequence[float], curves: Mapping[str, Sequence[float]],
                           preamble: Sequence[str] = ()) -> str:
    """Output characteristics: one vds_V column, one current column per gate bias."""
    frame = pd.DataFrame({"vds_V": list(v_ds)})
    for key, values in curves.items():
        frame[f"ids_A@vgs={key}"] = list(values)
    head = "".join(f"# {line}\n" for line in preamble)
    return head + frame_to_csv(frame)


def dump_checks_text(checks: Sequence[AnchorCheck]) -> str:
    lines = []
    for check in checks:
        value = "n/a" if check.value is None else format_float(check.value, 6)
        lines.append(f"{'PASS' if check.passed else 'FAIL'}  {check.name}: {value} (expected {check.expected})")
    passed = sum(c.passed for c in checks)
    lines.append(f"{passed}/{len(checks)} anchors passed")
    return "\n".join(lines) + "\n"


def dump_json(payload) -> str:
    """Stable JSON: sorted keys, floats rounded to 9 significant digits."""
    def rounded(value):
        if isinstance(value, float):
            return float(format_float(value))
        if isinstance(value, dict):
            return {str(k): rounded(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [rounded(v) for v in value]
        return value

    return json.dumps(rounded(payload), sort_keys=True, indent=2) + "\n"


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
