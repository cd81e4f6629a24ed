import pytest

from rotornv.config import config_from_dict
from rotornv.geometry import FieldConfig, PhysicalConstants, RotorGeometry


@pytest.fixture
def constants():
    return PhysicalConstants()


@pytest.fixture
def geometry_default():
    return RotorGeometry()


@pytest.fixture
def field_tilted():
    return FieldConfig(theta_b_deg=1.0)


@pytest.fixture
def cfg_default():
    return config_from_dict({})


@pytest.fixture
def cfg_tilted():
    return config_from_dict({"field": {"theta_b_deg": 1.0}})
