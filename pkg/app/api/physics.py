from fastapi import APIRouter, Query

from app.core.config import settings
from app.core.validators import GridValidator
from app.schemas.physics import VthCurveRequest, VthCurveResponse
from app.services.physics_service import vth_freezeout_curve
from app.services.reference_library import default_stack

router = APIRouter(prefix="/physics", tags=["physics"])


@router.post("/vth-curve", response_model=VthCurveResponse)
def vth_curve(request: VthCurveRequest):
    """Threshold voltage of an arbitrary MOS stack under dopant freeze-out."""
    return VthCurveResponse(points=vth_freezeout_curve(request.stack, request.temperatures))


@router.get("/vth-curve", response_model=VthCurveResponse)
def default_vth_curve(temperatures: str = Query("10:298:16")):
    stack = default_stack(settings.reference_library_dir)
    return VthCurveResponse(points=vth_freezeout_curve(stack, GridValidator.parse_grid(temperatures)))
