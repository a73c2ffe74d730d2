import math
import os

import numpy as np
import pytest

from geodesic_lab.pipeline.group_models import (
    bolza_generators,
    enumerate_length_spectrum,
    modular_generators,
    modular_necklace_spectrum,
)
from geodesic_lab.pipeline.spectral_data import ZeroSet, synthesize_zeros

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SAMPLE_EIGENVALUES = os.path.join(REPO_ROOT, "data", "bolza_sample_eigenvalues.txt")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale runs taking more than a few seconds")


@pytest.fixture
def data_dir(tmp_path, monkeypatch):
    """Isolated DATA_DIR with the lab env variables cleared"""
    monkeypatch.setenv("DATA_DIR", str(tmp_path))
    for name in ("LAB_WORKERS", "LAB_WORD_CAP_BOLZA", "LAB_WORD_CAP_MODULAR", "LAB_MP_DPS"):
        monkeypatch.delenv(name, raising=False)
    return tmp_path


@pytest.fixture(scope="session")
def sample_eigenvalue_path():
    return SAMPLE_EIGENVALUES


@pytest.fixture(scope="session")
def modular_small():
    """PSL(2, Z) classes with trace <= 20"""
    return modular_necklace_spectrum(20, word_cap=40, workers=1)


@pytest.fixture(scope="session")
def modular_1e4():
    return enumerate_length_spectrum(modular_generators(), 1e4)


@pytest.fixture(scope="session")
def bolza_200():
    return enumerate_length_spectrum(bolza_generators(), 200.0)


@pytest.fixture(scope="session")
def synthetic_zeros():
    """Weyl-density zeros for area 4 pi up to T = 60"""
    return synthesize_zeros(4 * math.pi, 60.0, seed=7)


def make_zeros(gammas, mults=None, real_zeros=(), area=4 * math.pi, coverage=None, trivial=True):
    gammas = np.asarray(gammas, dtype=np.float64)
    mults = np.ones(gammas.size, dtype=np.int64) if mults is None else np.asarray(mults, dtype=np.int64)
    return ZeroSet(
        trivial=trivial,
        real_zeros=tuple(real_zeros),
        gammas=gammas,
        multiplicities=mults,
        area=area,
        coverage=float(coverage if coverage is not None else (gammas[-1] if gammas.size else 0.0)),
        source="test",
    )
