import logging
from typing import List

from fastapi import APIRouter, Depends

from app.core.config import settings
from app.core.dependencies import get_library
from app.schemas.device import ReferenceParamLibrary
from app.schemas.fitting import AnchorOutcome, CalibrateRequest, FitResult
from app.services.fitting_service import (calibrate, evaluate_anchors,
                                          measured_anchor_table)

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/fitting", tags=["fitting"])


@router.post("/calibrate", response_model=FitResult)
def calibrate_params(request: CalibrateRequest):
    """
    Fit the free parameters of a set against measured sweeps.

    Args:
        request: Fit problem and optional seed

    Returns:
        FitResult: Fitted parameters with per-sweep errors
    """
    seed = settings.DEFAULT_SEED if request.seed is None else request.seed
    result = calibrate(request.problem, seed=seed)
    logger.info(f"Calibration finished: mean error {result.mean_rel_error:.4g}, converged={result.converged}")
    return result


@router.get("/anchors", response_model=List[AnchorOutcome])
def reference_anchors(library: ReferenceParamLibrary = Depends(get_library)):
    """Measured anchors evaluated against the shipped reference sets."""
    outcomes = []
    for anchor in measured_anchor_table():
        outcomes.extend(evaluate_anchors([anchor], library.sets[anchor.set_name], library.geometry))
    return outcomes
