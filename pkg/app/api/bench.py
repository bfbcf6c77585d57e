from fastapi import APIRouter, Depends

from app.core.config import settings
from app.core.dependencies import get_bench_config, get_library
from app.schemas.circuits import BenchReport, PowerBreakdown, PowerScenario
from app.schemas.device import ReferenceParamLibrary
from app.services.bench_service import BenchConfig, run_bench
from app.services.circuit_service import module_power

router = APIRouter(prefix="/bench", tags=["bench"])


@router.post("/run", response_model=BenchReport)
def bench_run(config: BenchConfig = Depends(get_bench_config),
              library: ReferenceParamLibrary = Depends(get_library)):
    """Comparison table and anchor checks for the configured bench scenario."""
    return run_bench(config, library, max_workers=settings.MAX_WORKERS)


@router.post("/power", response_model=PowerBreakdown)
def bench_power(scenario: PowerScenario):
    return module_power(scenario)
