import logging

from fastapi import APIRouter, Depends, Query

from app.core.dependencies import get_library
from app.core.validators import GridValidator
from app.schemas.device import (CurrentRequest, CurrentResponse, IdsatOverdriveCurve, OutputFamily,
                                ReferenceParamLibrary, SweepRequest)
from app.schemas.sweep import IVSweep
from app.services import compact_model_service as cms

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/model", tags=["model"])


@router.post("/current", response_model=CurrentResponse)
def model_current(request: CurrentRequest):
    """Drain current, transconductance, threshold and swing at one bias point."""
    t_k = request.bias.t_k
    return CurrentResponse(
        i_ds=cms.drain_current(request.params, request.geometry, request.bias),
        g_m=cms.transconductance(request.params, request.geometry, request.bias),
        vth=float(cms.vth_of_t(request.params, t_k)),
        ss_mv_dec=float(cms.ss_of_t(request.params, t_k)),
    )


@router.post("/sweep", response_model=IVSweep)
def model_sweep(request: SweepRequest):
    return cms.iv_sweep_synthesize(request.params, request.geometry, request.v_ds,
                                   request.t_k, request.v_gs)


@router.get("/{name}/transfer", response_model=IVSweep)
def reference_transfer(
    name: str,
    t_k: float = Query(77.0),
    v_ds: float = Query(0.05, ge=0),
    v_gs: str = Query("0:0.9:0.01", description="start:stop:step or comma list"),
    library: ReferenceParamLibrary = Depends(get_library),
):
    """
    Transfer curve of a reference parameter set.

    Args:
        name: Reference set name
        t_k: Temperature in kelvin
        v_ds: Drain bias magnitude
        v_gs: Gate grid
        library: Loaded reference library

    Returns:
        IVSweep: Synthesized sweep
    """
    device = library.transistor(name)
    grid = GridValidator.parse_grid(v_gs)
    return cms.iv_sweep_synthesize(device.params, device.geometry, v_ds, t_k, grid, device_id=name)


@router.get("/{name}/output", response_model=OutputFamily)
def reference_output(
    name: str,
    t_k: float = Query(77.0),
    v_gs: str = Query("0.3,0.6,0.9"),
    v_ds: str = Query("0:0.9:0.01"),
    library: ReferenceParamLibrary = Depends(get_library),
):
    device = library.transistor(name)
    return cms.output_family(device.params, device.geometry, t_k,
                             GridValidator.parse_grid(v_gs), GridValidator.parse_grid(v_ds))


@router.get("/{name}/idsat", response_model=IdsatOverdriveCurve)
def reference_idsat(
    name: str,
    t_k: float = Query(77.0),
    v_dd: float = Query(0.9, gt=0),
    v_ov: str = Query("0.3:0.8:0.05"),
    library: ReferenceParamLibrary = Depends(get_library),
):
    """Saturation current against overdrive with its straight-line fit."""
    device = library.transistor(name)
    return cms.idsat_vs_overdrive(device.params, device.geometry, t_k, v_dd, GridValidator.parse_grid(v_ov))
