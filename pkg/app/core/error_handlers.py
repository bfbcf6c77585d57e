"""
Exception hierarchy and HTTP error handlers for the cryomos toolkit.
Provides consistent error responses and logging.
"""

import logging
import time
import traceback
from typing import Any, Dict, Iterable, Optional, Union

from fastapi import HTTPException, Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

logger = logging.getLogger(__name__)


class ErrorResponse:
    """Standardized error response format."""

    def __init__(self,
                 error_code: str,
                 message: str,
                 details: Union[str, dict, None] = None,
                 status_code: int = 500):
        self.error_code = error_code
        self.message = message
        self.details = details
        self.status_code = status_code
        self.timestamp = time.time()

    def to_dict(self):
        response = {
            "error": {
                "code": self.error_code,
                "message": self.message,
                "timestamp": self.timestamp
            }
        }
        if self.details:
            response["error"]["details"] = self.details
        return response


# Custom exception classes
class CryoToolkitError(Exception):
    """Base class for every error raised by the toolkit."""

    error_code = "TOOLKIT_ERROR"

    def __init__(self, message: str, error_code: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        self.message = message
        if error_code:
            self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)


class DomainError(CryoToolkitError):
    """Raised when an input lies outside the modelled domain."""

    error_code = "DOMAIN_ERROR"


class SolverError(CryoToolkitError):
    """Raised when a numerical solver fails to converge."""

    error_code = "SOLVER_ERROR"

    def __init__(self, message: str, residual: float = float("nan")):
        self.residual = residual
        super().__init__(message, details={"residual": residual})


class ExtractionError(CryoToolkitError):
    """Raised when a parameter cannot be extracted from a sweep."""

    error_code = "EXTRACTION_ERROR"


class NoCrossingError(ExtractionError):
    error_code = "NO_CROSSING"


class InsufficientDecadesError(ExtractionError):
    error_code = "INSUFFICIENT_DECADES"


class WindowDetectionError(ExtractionError):
    error_code = "WINDOW_DETECTION"


class UnreachableRatioError(ExtractionError):
    error_code = "UNREACHABLE_RATIO"


class DegenerateSeriesError(ExtractionError):
    error_code = "DEGENERATE_SERIES"


class FailsToOscillateError(CryoToolkitError):
    """Raised when an inverter cell cannot switch at the requested bias."""

    error_code = "FAILS_TO_OSCILLATE"

    def __init__(self, v_dd: float, t_k: float, reason: str):
        self.v_dd = v_dd
        self.t_k = t_k
        self.reason = reason
        super().__init__(
            f"Cell fails to oscillate at V_DD={v_dd:g} V, T={t_k:g} K: {reason}",
            details={"v_dd": v_dd, "t_k": t_k, "reason": reason},
        )


class InfeasibleAnchorsError(CryoToolkitError):
    """Raised when calibration cannot meet every anchor within tolerance."""

    error_code = "INFEASIBLE_ANCHORS"

    def __init__(self, unmet: Iterable[str], best: Any = None):
        self.unmet = list(unmet)
        self.best = best
        super().__init__(
            "Anchors not met: " + "; ".join(self.unmet),
            details={"unmet": self.unmet},
        )


class ParseError(CryoToolkitError):
    """Raised when an input file cannot be parsed."""

    error_code = "PARSE_ERROR"

    def __init__(self, path: str, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}",
                         details={"path": path, "line": line})


class MissingParameterSetError(CryoToolkitError):
    """Raised when a named parameter set is absent from a library."""

    error_code = "MISSING_PARAMETER_SET"

    def __init__(self, name: str, available: Iterable[str] = ()):
        self.name = name
        self.available = sorted(available)
        super().__init__(
            f"Parameter set '{name}' not found",
            details={"available": self.available},
        )


def status_for(exc: CryoToolkitError) -> int:
    """HTTP status used for a toolkit error."""
    if isinstance(exc, MissingParameterSetError):
        return status.HTTP_404_NOT_FOUND
    if isinstance(exc, (DomainError, ExtractionError, ParseError,
                        FailsToOscillateError, InfeasibleAnchorsError)):
        return status.HTTP_400_BAD_REQUEST
    return status.HTTP_500_INTERNAL_SERVER_ERROR


async def http_exception_handler(request: Request, exc: HTTPException):
    """Handle HTTP exceptions with consistent format."""
    logger.warning(f"HTTP {exc.status_code}: {exc.detail} - {request.url}")

    error_response = ErrorResponse(
        error_code=f"HTTP_{exc.status_code}",
        message=exc.detail,
        status_code=exc.status_code
    )

    return JSONResponse(
        status_code=exc.status_code,
        content=error_response.to_dict(),
        headers=getattr(exc, 'headers', None)
    )


async def validation_exception_handler(request: Request, exc: RequestValidationError):
    """Handle request validation errors."""
    logger.warning(f"Validation error: {exc.errors()} - {request.url}")

    formatted_errors = []
    for error in exc.errors():
        field = " -> ".join(str(loc) for loc in error["loc"])
        formatted_errors.append({
            "field": field,
            "message": error["msg"],
            "type": error["type"]
        })

    error_response = ErrorResponse(
        error_code="VALIDATION_ERROR",
        message="Request validation failed",
        details={"validation_errors": formatted_errors},
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY
    )

    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        content=error_response.to_dict()
    )


async def toolkit_exception_handler(request: Request, exc: CryoToolkitError):
    """Handle toolkit errors raised by the numerical services."""
    status_code = status_for(exc)
    if status_code >= 500:
        logger.error(f"Toolkit error: {exc.message} - {request.url}")
        logger.error(f"Traceback: {traceback.format_exc()}")
    else:
        logger.warning(f"{exc.error_code}: {exc.message} - {request.url}")

    error_response = ErrorResponse(
        error_code=exc.error_code,
        message=exc.message,
        details=exc.details,
        status_code=status_code
    )

    return JSONResponse(
        status_code=status_code,
        content=error_response.to_dict()
    )


async def general_exception_handler(request: Request, exc: Exception):
    """Handle all other unexpected exceptions."""
    logger.error(f"Unexpected error: {str(exc)} - {request.url}")
    logger.error(f"Traceback: {traceback.format_exc()}")

    error_response = ErrorResponse(
        error_code="INTERNAL_SERVER_ERROR",
        message="An unexpected error occurred",
        details="Please try again later or contact support if the problem persists",
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR
    )

    return JSONResponse(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        content=error_response.to_dict()
    )


def setup_error_handlers(app):
    """Set up all error handlers for the FastAPI application."""
    app.add_exception_handler(HTTPException, http_exception_handler)
    app.add_exception_handler(RequestValidationError, validation_exception_handler)
    app.add_exception_handler(CryoToolkitError, toolkit_exception_handler)
    app.add_exception_handler(Exception, general_exception_handler)

    logger.info("Error handlers configured successfully")
