"""
Input validation utilities for the cryomos toolkit.
Validates temperatures, bias grids and parameter values before they reach
the numerical services.
"""

import logging
import math
from typing import Dict, Iterable, List, Sequence

import numpy as np

from app.core.error_handlers import DomainError

logger = logging.getLogger(__name__)

T_MIN_K = 4.0
T_MAX_K = 400.0


class TemperatureValidator:
    """Temperature range validation."""

    @staticmethod
    def validate_temperature(t_k: float) -> List[str]:
        errors = []
        if t_k is None or not math.isfinite(t_k):
            errors.append("Temperature must be a finite number")
            return errors
        if t_k < T_MIN_K:
            errors.append(f"Temperature {t_k:g} K is below the modelled range ({T_MIN_K:g} K)")
        if t_k > T_MAX_K:
            errors.append(f"Temperature {t_k:g} K is above the modelled range ({T_MAX_K:g} K)")
        return errors


class GridValidator:
    """Bias and temperature grid validation."""

    @staticmethod
    def validate_grid(values: Sequence[float]) -> List[str]:
        """
        Validate a sweep grid.

        Args:
            values: Grid values in sweep order

        Returns:
            List of validation error messages (empty if valid)
        """
        errors = []
        if len(values) == 0:
            errors.append("Grid must not be empty")
            return errors
        arr = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(arr)):
            errors.append("Grid values must be finite")
        elif np.any(np.diff(arr) <= 0):
            errors.append("Grid must be strictly increasing")
        return errors

    @staticmethod
    def parse_grid(text: str) -> np.ndarray:
        """
        Parse "start:stop:step" or a comma-separated list into a grid.

        The range form includes both end points; the point count is rounded
        so that 0:0.9:0.01 yields 91 values.
        """
        text = text.strip()
        try:
            if ":" in text:
                parts = [float(p) for p in text.split(":")]
                if len(parts) != 3:
                    raise ValueError("expected start:stop:step")
                start, stop, step = parts
                if step <= 0:
                    raise ValueError("step must be positive")
                if stop < start:
                    raise ValueError("stop must not be below start")
                count = int(round((stop - start) / step)) + 1
                grid = np.round(start + step * np.arange(count), 12)
            else:
                grid = np.array([float(p) for p in text.split(",") if p.strip()])
        except ValueError as e:
            raise DomainError(f"Invalid grid '{text}': {e}", error_code="INVALID_GRID")

        raise_validation_error_if_any({"grid": GridValidator.validate_grid(grid)})
        return grid


def check_temperature(t_k: float) -> float:
    """Return t_k or raise DomainError if it is outside [4 K, 400 K]."""
    raise_validation_error_if_any({"T": TemperatureValidator.validate_temperature(t_k)})
    return float(t_k)


def check_temperatures(values: Iterable[float]) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise DomainError("Temperature grid is empty", error_code="EMPTY_GRID")
    bad = arr[(arr < T_MIN_K) | (arr > T_MAX_K) | ~np.isfinite(arr)]
    if bad.size:
        raise DomainError(
            f"Temperature {bad[0]:g} K outside [{T_MIN_K:g}, {T_MAX_K:g}] K",
            error_code="TEMPERATURE_OUT_OF_RANGE",
        )
    return arr


def raise_validation_error_if_any(validation_errors: Dict[str, List[str]]):
    """
    Raise DomainError if there are any validation errors.

    Args:
        validation_errors: Dictionary of validation errors

    Raises:
        DomainError: If validation errors exist
    """
    error_messages = []
    for field, errors in validation_errors.items():
        for error in errors:
            error_messages.append(f"{field}: {error}")

    if error_messages:
        raise DomainError(
            message="Validation failed: " + "; ".join(error_messages),
            error_code="VALIDATION_ERROR"
        )


# Pydantic validators for use in schemas
def validate_temperature_field(cls, v):
    """Pydantic validator for temperatures in kelvin."""
    errors = TemperatureValidator.validate_temperature(v)
    if errors:
        raise ValueError("; ".join(errors))
    return v
