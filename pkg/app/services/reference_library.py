import logging
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from app.core.config import settings
from app.core.error_handlers import DomainError, ParseError
from app.schemas.device import DeviceGeometry, ModelParams, ReferenceParamLibrary
from app.services.compact_model_service import vth_of_t
from app.utils.param_files import (ParameterFile, library_to_parameter_file,
                                   read_parameter_file, write_parameter_file)

logger = logging.getLogger(__name__)

LIBRARY_FILE = "reference_library.params"
CRYO_PREFIX = "Cryo"
CRYO_VTH_LIMIT = 0.2
CRYO_CHECK_TEMPERATURES = np.linspace(10.0, 298.0, 30)


def check_cryo_thresholds(name: str, params: ModelParams):
    """Cryo-targeted sets must keep |V_TH| below 0.2 V from 10 K to 298 K."""
    vth = np.abs(vth_of_t(params, CRYO_CHECK_TEMPERATURES))
    if np.any(vth >= CRYO_VTH_LIMIT):
        worst = float(CRYO_CHECK_TEMPERATURES[int(np.argmax(vth))])
        raise DomainError(
            f"Set {name} exceeds |V_TH| < {CRYO_VTH_LIMIT} V at T={worst:g} K",
            error_code="CRYO_VTH_LIMIT",
        )


def build_library(version: str, geometry: DeviceGeometry,
                  sets: Dict[str, ModelParams]) -> ReferenceParamLibrary:
    for name, params in sets.items():
        if name.startswith(CRYO_PREFIX):
            check_cryo_thresholds(name, params)
    return ReferenceParamLibrary(version=version, geometry=geometry, sets=sets)


def load_reference_library(directory: Optional[Path] = None) -> ReferenceParamLibrary:
    """Load and merge every *.params file in the library directory."""
    directory = Path(directory or settings.reference_library_dir)
    files = sorted(directory.glob("*.params"))
    if not files:
        raise ParseError(str(directory), 0, "No parameter files in reference library")

    version = None
    geometry = None
    sets: Dict[str, ModelParams] = {}
    for path in files:
        pf = read_parameter_file(path)
        version = version or pf.version
        if pf.geometry is not None:
            if geometry is not None and pf.geometry != geometry:
                raise ParseError(str(path), 0, "Geometry differs from other library files")
            geometry = pf.geometry
        for name, params in pf.models.items():
            if name in sets:
                raise ParseError(str(path), 0, f"Parameter set {name} defined twice")
            sets[name] = params

    if geometry is None:
        raise ParseError(str(directory), 0, "Reference library has no [geometry] section")
    library = build_library(version, geometry, sets)
    logger.info(f"Loaded reference library v{version} with {len(sets)} sets from {directory}")
    return library


def write_reference_library(library: ReferenceParamLibrary, directory) -> Path:
    directory = Path(directory)
    return write_parameter_file(library_to_parameter_file(library), directory / LIBRARY_FILE)


def default_stack(directory: Optional[Path] = None):
    """The [stack default] section shipped with the library."""
    directory = Path(directory or settings.reference_library_dir)
    for path in sorted(directory.glob("*.params")):
        pf: ParameterFile = read_parameter_file(path)
        if "default" in pf.stacks:
            return pf.stacks["default"]
    raise ParseError(str(directory), 0, "No [stack default] section in reference library")
