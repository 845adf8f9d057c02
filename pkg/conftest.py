"""
Shared fixtures: grids, the quadratic and perturbed potentials, and a scratch output directory.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from src.models import GridFunction2D
from src.sample_fields import family_potential


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: refinement studies on 129^2 grids and above")


@pytest.fixture
def grid33():
    return GridFunction2D.square(lambda x1, x2: np.zeros_like(x1), 33)


@pytest.fixture
def grid65():
    return GridFunction2D.square(lambda x1, x2: np.zeros_like(x1), 65)


@pytest.fixture(scope="session")
def isotropic65():
    return family_potential("isotropic", 65)


@pytest.fixture(scope="session")
def diagonal65():
    return family_potential("diagonal", 65, a=2.0, b=0.5)


@pytest.fixture(scope="session")
def skew65():
    return family_potential("skew", 65, eps=0.5)


@pytest.fixture(scope="session")
def quadratic65(isotropic65, diagonal65, skew65):
    return {"isotropic": isotropic65, "diagonal": diagonal65, "skew": skew65}


@pytest.fixture(scope="session")
def perturbed65():
    return family_potential("perturbed", 65, amplitude=0.05)


@pytest.fixture
def out_dir(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    return out
