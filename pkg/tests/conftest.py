import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from univnet import tensor as T

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def f64():
    with T.default_dtype(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)



def pytest_terminal_summary(terminalreporter):
    import sys

    module = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
