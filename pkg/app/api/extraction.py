import logging
from typing import List

from fastapi import APIRouter, Query

from app.schemas.sweep import ExtractionReport, ExtractionRequest, IVSweep, LeakageFit
from app.services.extraction_service import (DEFAULT_ON_OFF_RATIO, extract_all,
                                             extract_leakage_series, extract_sweep,
                                             fit_leakage_eta)

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/extraction", tags=["extraction"])


@router.post("", response_model=ExtractionReport)
def extract_pair(request: ExtractionRequest):
    """
    Extract every figure of merit from a linear/saturation pair.

    Extractors that fail are listed in the report's errors map instead of
    failing the request.
    """
    report = extract_all(request.linear, request.saturation, ratio=request.ratio)
    if report.errors:
        logger.info(f"Partial extraction for {report.device_id}: {sorted(report.errors)}")
    return report


@router.post("/sweep", response_model=ExtractionReport)
def extract_single(sweep: IVSweep, ratio: float = Query(DEFAULT_ON_OFF_RATIO, ge=1)):
    return extract_sweep(sweep, ratio=ratio)


@router.post("/leakage", response_model=LeakageFit)
def leakage_law(sweeps: List[IVSweep]):
    """Fit the leakage temperature law to the zero-bias currents of one device."""
    return fit_leakage_eta(extract_leakage_series(sweeps))
