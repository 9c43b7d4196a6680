import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from basisinit.basis import default_train_config, progressive_pretrain
from basisinit.nn import Architecture, InitStrategy

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def tiny_library(dimension=1, max_degree=3, seed=0, width=16, epochs=40):
    """A fast, low-accuracy library for structural tests (no MSE gate)."""
    cfg = default_train_config(dimension, epochs=epochs, seed=seed, n_samples=64, grid_size=8)
    arch = Architecture((dimension, width, 1), "gelu")
    return progressive_pretrain(dimension, max_degree, cfg, arch, InitStrategy(seed=seed), max_mse=None)


@pytest.fixture(scope="session")
def lib1d():
    return tiny_library(1, 4)


@pytest.fixture(scope="session")
def lib2d():
    return tiny_library(2, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> one PASS/FAIL line, filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[n])
