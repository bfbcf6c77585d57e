"""
Transfer-curve CSV files with a '#' metadata preamble.

    # polarity=NMOS
    # vds_V=0.05
    # T_K=77
    # W_um=0.1
    # L_um=0.03
    # cox_F_cm2=1.5e-06
    vgs_V,ids_A
    0,1.2345e-12

PMOS files written with terminal signs (negative vds_V) are flipped back to
magnitudes on ingestion; files with positive vds_V already hold magnitudes.
"""

import io
import logging
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.core.error_handlers import ParseError
from app.schemas.device import DeviceGeometry, Polarity
from app.schemas.sweep import IVSweep
from app.utils.param_files import SIG_DIGITS, format_float

logger = logging.getLogger(__name__)

COLUMNS = ("vgs_V", "ids_A")
HEADER = ",".join(COLUMNS)
REQUIRED_META = ("vds_V", "T_K", "W_um", "L_um", "cox_F_cm2", "polarity")
OPTIONAL_META = ("origin", "device")


def _read_preamble(lines: List[str], path: str) -> Tuple[Dict[str, Tuple[str, int]], int]:
    """Metadata entries with their line numbers, and the index of the header line."""
    meta: Dict[str, Tuple[str, int]] = {}
    for index, raw in enumerate(lines):
        line = raw.strip()
        if not line:
            continue
        if not line.startswith("#"):
            if line.replace(" ", "") != HEADER:
                raise ParseError(path, index + 1, f"Expected header '{HEADER}', got: {line}")
            return meta, index
        body = line[1:].strip()
        if "=" not in body:
            continue
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in REQUIRED_META and key not in OPTIONAL_META:
            raise ParseError(path, index + 1, f"Unknown metadata key '{key}'")
        meta[key] = (value, index + 1)
    raise ParseError(path, max(1, len(lines)), f"Missing data header '{HEADER}'")


def _read_table(lines: List[str], header_index: int, path: str) -> Tuple[np.ndarray, np.ndarray]:
    linenos = [i + 1 for i in range(header_index + 1, len(lines)) if lines[i].strip()]
    if not linenos:
        raise ParseError(path, len(lines), "No data rows")
    for lineno in linenos:
        if lines[lineno - 1].count(",") != 1:
            raise ParseError(path, lineno, f"Expected 2 columns, got {lines[lineno - 1].count(',') + 1}")

    body = "\n".join([HEADER] + [lines[n - 1] for n in linenos])
    frame = pd.read_csv(io.StringIO(body), dtype=str, keep_default_na=False, skipinitialspace=True)
    values = frame.apply(pd.to_numeric, errors="coerce")
    bad = values.isna().any(axis=1).to_numpy()
    if bad.any():
        lineno = linenos[int(np.argmax(bad))]
        raise ParseError(path, lineno, f"Non-numeric value in row: {lines[lineno - 1].strip()}")
    return values["vgs_V"].to_numpy(dtype=float), values["ids_A"].to_numpy(dtype=float)


def parse_sweep_csv(text: str, path: str = "<string>") -> IVSweep:
    lines = text.splitlines()
    meta, header_index = _read_preamble(lines, path)
    for key in REQUIRED_META:
        if key not in meta:
            raise ParseError(path, 1, f"Missing metadata '# {key}='")
    v_gs, i_ds = _read_table(lines, header_index, path)

    try:
        polarity = Polarity(meta["polarity"][0].upper())
    except ValueError:
        raise ParseError(path, meta["polarity"][1], f"Unknown polarity {meta['polarity'][0]}")

    try:
        v_ds = float(meta["vds_V"][0])
    except ValueError:
        raise ParseError(path, meta["vds_V"][1], f"Invalid vds_V {meta['vds_V'][0]}")
    # Signed PMOS files mirror the gate axis; magnitudes keep the off side below zero.
    if polarity == Polarity.PMOS and v_ds < 0:
        order = np.argsort(-v_gs)
        v_gs, i_ds = -v_gs[order] + 0.0, np.abs(i_ds[order])

    try:
        geometry = DeviceGeometry(
            w_um=meta["W_um"][0], l_um=meta["L_um"][0], c_ox=meta["cox_F_cm2"][0]
        )
        return IVSweep(
            v_ds=abs(v_ds),
            t_k=meta["T_K"][0],
            geometry=geometry,
            polarity=polarity,
            v_gs=tuple(float(v) for v in v_gs),
            i_ds=tuple(float(i) for i in i_ds),
            origin=meta.get("origin", ("measured", 0))[0],
            device_id=meta.get("device", (None, 0))[0],
        )
    except (ValidationError, ValueError) as e:
        raise ParseError(path, 1, f"Invalid sweep: {e}")


def read_sweep_csv(path) -> IVSweep:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot read {path}: {e}")
        raise ParseError(str(path), 0, f"Cannot read file: {e.strerror}")
    return parse_sweep_csv(text, str(path))


def dump_sweep_csv(sweep: IVSweep, signed: bool = False, digits: int = SIG_DIGITS) -> str:
    """
    CSV text for a sweep. With signed=True PMOS values are written with
    negative terminal signs.
    """
    sign = -1.0 if signed and sweep.polarity == Polarity.PMOS else 1.0
    lines = [
        f"# polarity={sweep.polarity.value}",
        f"# vds_V={format_float(sign * sweep.v_ds, digits)}",
        f"# T_K={format_float(sweep.t_k, digits)}",
        f"# W_um={format_float(sweep.geometry.w_um, digits)}",
        f"# L_um={format_float(sweep.geometry.l_um, digits)}",
        f"# cox_F_cm2={format_float(sweep.geometry.c_ox, digits)}",
        f"# origin={sweep.origin}",
    ]
    if sweep.device_id:
        lines.append(f"# device={sweep.device_id}")
    frame = pd.DataFrame({
        "vgs_V": sign * np.asarray(sweep.v_gs, dtype=float) + 0.0,
        "ids_A": sign * np.asarray(sweep.i_ds, dtype=float) + 0.0,
    })
    if sign < 0:
        frame = frame.iloc[::-1]
    table = frame.to_csv(index=False, float_format=f"%.{digits}g", lineterminator="\n")
    return "\n".join(lines) + "\n" + table


def write_sweep_csv(sweep: IVSweep, path, signed: bool = False, digits: int = SIG_DIGITS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_sweep_csv(sweep, signed=signed, digits=digits), encoding="utf-8")
    return path


def device_id_for(path, sweep: IVSweep) -> str:
    return sweep.device_id or Path(path).stem


def list_sweep_files(paths) -> List[Path]:
    """Expand files and directories into a sorted list of CSV files."""
    found: List[Path] = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            found.extend(sorted(p.glob("*.csv")))
        else:
            found.append(p)
    return sorted(found, key=lambda q: str(q))
