import logging

from fastapi import FastAPI

from app.api import bench, extraction, fitting, library, model, physics
from app.core.config import settings
from app.core.error_handlers import setup_error_handlers
from app.utils.monitoring import prometheus_endpoint, prometheus_middleware

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

app = FastAPI(
    title="Cryogenic MOSFET Toolkit API",
    description="Compact modelling, parameter extraction, calibration and circuit benchmarks for cryogenic CMOS",
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc"
)

# Setup error handlers
setup_error_handlers(app)

# Prometheus monitoring middleware
prometheus_middleware(app)

# Routers
app.include_router(library.router)
app.include_router(model.router)
app.include_router(physics.router)
app.include_router(extraction.router)
app.include_router(fitting.router)
app.include_router(bench.router)

@app.get("/health")
def health_check():
    return {"status": "healthy"}

@app.get("/metrics")
def metrics():
    return prometheus_endpoint()
