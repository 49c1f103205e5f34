import pytest

from shrinker.assembly import Construction, assemble_initial_surface
from shrinker.params import ConstructionParams


@pytest.fixture(scope="session")
def construction_m8():
    return Construction.from_params(ConstructionParams(m=8, b=0.0))


@pytest.fixture(scope="session")
def mesh_m8(construction_m8):
    return assemble_initial_surface(construction_m8)


@pytest.fixture(scope="session")
def construction_m16():
    return Construction.from_params(ConstructionParams(m=16, b=0.0))


@pytest.fixture(scope="session")
def mesh_m16(construction_m16):
    return assemble_initial_surface(construction_m16)
