import numpy as np
import pytest

from groundstate.geometry import build_sphere_radial, build_trisphere
from groundstate.potential import allen_cahn


@pytest.fixture(scope="session")
def s3():
    return build_sphere_radial(3, 400)[0]


@pytest.fixture(scope="session")
def s3_coarse():
    return build_sphere_radial(3, 200)[0]


@pytest.fixture(scope="session")
def ico3():
    return build_trisphere(3)[0]


@pytest.fixture(scope="session")
def ac04():
    return allen_cahn(0.4)


@pytest.fixture(scope="session")
def ground04(s3):
    from groundstate.bifurcation import solve_member

    return solve_member("ground", 0.4, s3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
