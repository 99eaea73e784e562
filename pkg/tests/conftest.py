import numpy as np
import pytest

from lorentzgas import pointset as ps
from lorentzgas.scatter import LorentzScatteringMap, specular_angle


@pytest.fixture(scope="session")
def smap2():
    return LorentzScatteringMap(2, specular_angle())


@pytest.fixture(scope="session")
def z2_config():
    return ps.ScattererConfig(ps.square_lattice(2), 0.05)


@pytest.fixture(scope="session")
def poisson_config():
    return ps.ScattererConfig(ps.PoissonSpec(1.0, 20240), 0.05)


@pytest.fixture()
def rng():
    return np.random.default_rng(987)
