import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from freqattack.model import Classifier, default_architecture

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model():
    return Classifier(default_architecture(num_classes=4, width=0.5), (8, 8, 1), seed=0)


def naive_dct2(plane):
    """Direct O(d^4) evaluation of the orthonormal 2D DCT-II."""
    d = plane.shape[0]
    out = np.zeros((d, d))
    for k in range(d):
        for l in range(d):
            acc = 0.0
            for i in range(d):
                for j in range(d):
                    acc += (plane[i, j] * np.cos(np.pi * (2 * i + 1) * k / (2 * d))
                            * np.cos(np.pi * (2 * j + 1) * l / (2 * d)))
            out[k, l] = np.sqrt((1 if k == 0 else 2) / d) * np.sqrt((1 if l == 0 else 2) / d) * acc
    return out


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
