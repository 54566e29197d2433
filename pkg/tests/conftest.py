import numpy as np
import pytest

from dualsign import tensorkit as tk


@pytest.fixture(autouse=True)
def finite_checks():
    """Run the whole suite in debug mode: every op output must be finite."""
    previous = tk.set_finite_checks(True)
    yield
    tk.set_finite_checks(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
