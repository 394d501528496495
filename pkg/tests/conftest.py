import sys

import numpy as np
import pytest

from axbxp.engine import load_digits, quantize_model, train_tiny
from axbxp.engine.quant import QuantLayer, QuantModel, QuantTensor


def make_fc_model(weight, bias=None, in_scale=1.0, w_scale=1.0):
    """One-layer integer FC model, no calibration involved."""
    w = np.asarray(weight, dtype=np.int64)
    b = np.zeros(w.shape[0], dtype=np.int64) if bias is None else np.asarray(bias, dtype=np.int64)
    layer = QuantLayer("fc", QuantTensor(w, w_scale), b, in_scale)
    return QuantModel([layer], (w.shape[1],), w.shape[0])


@pytest.fixture(scope="session")
def fc_factory():
    return make_fc_model


@pytest.fixture(scope="session")
def digits():
    return load_digits()


@pytest.fixture(scope="session")
def mlp(digits):
    return train_tiny(digits, epochs=30, seed=0)


@pytest.fixture(scope="session")
def qmlp(mlp, digits):
    return quantize_model(mlp, digits.train_x)


@pytest.fixture(scope="session")
def qcnn(digits):
    model = train_tiny(digits.subset(400, 100), epochs=3, seed=0, arch="cnn")
    return quantize_model(model, digits.train_x[:400])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
