import numpy as np
import pytest
from fastapi.testclient import TestClient

from app.core.dependencies import reset_caches
from app.main import app
from app.schemas.device import DeviceGeometry, ModelParams, Polarity
from app.schemas.physics import ChannelDoping, DopantKind, MosStack
from app.services.compact_model_service import iv_sweep_synthesize
from app.services.reference_library import load_reference_library

LINEAR_GRID = np.round(np.arange(0.0, 0.9 + 1e-9, 0.01), 6)
WIDE_GRID = np.round(np.arange(-0.4, 0.9 + 1e-9, 0.005), 6)


@pytest.fixture(scope="session")
def library():
    """The shipped reference parameter library."""
    return load_reference_library()


@pytest.fixture(scope="session")
def geometry(library):
    return library.geometry


@pytest.fixture(scope="session")
def cryo_nmos(library):
    return library.sets["CryoNMOS-ref"]


@pytest.fixture(scope="session")
def cryo_pmos(library):
    return library.sets["CryoPMOS-ref"]


@pytest.fixture
def simple_params():
    """A plain NMOS set with no floor on the swing and negligible leakage."""
    return ModelParams(
        polarity=Polarity.NMOS,
        vth0=0.3,
        c_vth=0.0005,
        mu0=250.0,
        alpha_ph=1.5,
        mu_c=500.0,
        n0=1.3,
        ss_floor=10.0,
        v_sat=1e7,
        lambda_clm=0.05,
        i_off_ref=1e-15,
        eta=50.0,
        theta_mob=0.0,
    )


@pytest.fixture
def long_geometry():
    return DeviceGeometry(w_um=1.0, l_um=1.0, c_ox=1.5e-6)


@pytest.fixture
def default_stack():
    return MosStack(
        v_fb=-1.0,
        c_ox=1.2e-6,
        doping=ChannelDoping(n_dop=1e18, e_ion=0.045, dopant_kind=DopantKind.ACCEPTOR),
    )


@pytest.fixture(scope="session")
def cryo_sat_77(library, cryo_nmos):
    return iv_sweep_synthesize(cryo_nmos, library.geometry, 0.9, 77.0, WIDE_GRID, device_id="cryo")


@pytest.fixture(scope="session")
def cryo_lin_77(library, cryo_nmos):
    return iv_sweep_synthesize(cryo_nmos, library.geometry, 0.05, 77.0, LINEAR_GRID, device_id="cryo")


@pytest.fixture
def client():
    """Test client against the application with fresh dependency caches."""
    reset_caches()
    yield TestClient(app)
    app.dependency_overrides.clear()
