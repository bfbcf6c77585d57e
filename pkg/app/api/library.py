from fastapi import APIRouter, Depends, Query

from app.core.dependencies import get_library
from app.schemas.device import LibraryResponse, ModelParams, ReferenceParamLibrary

router = APIRouter(prefix="/library", tags=["library"])


@router.get("", response_model=LibraryResponse)
def library_overview(include_params: bool = Query(False), library: ReferenceParamLibrary = Depends(get_library)):
    """
    Describe the reference parameter library.

    Args:
        include_params: Also return every parameter set
        library: Loaded reference library

    Returns:
        LibraryResponse: Version, geometry and set names
    """
    return LibraryResponse(
        version=library.version,
        names=library.names(),
        geometry=library.geometry,
        sets=dict(library.sets) if include_params else None,
    )


@router.get("/{name}", response_model=ModelParams)
def library_set(name: str, library: ReferenceParamLibrary = Depends(get_library)):
    return library.transistor(name).params
