import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sscodes.channel import AWGN, bec, bsc, z_channel

# numerical properties are slow-ish per example; no wall-clock deadline
settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("quick", max_examples=10, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

REFERENCE = {
    "awgn": AWGN(10.0),
    "bsc": bsc(0.1),
    "bec": bec(0.5),
    "z": z_channel(0.1),
}


@pytest.fixture(params=sorted(REFERENCE))
def reference_channel(request):
    return REFERENCE[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance report ----------------------------------------------------------

_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Print and collect one pass/fail line per acceptance criterion."""

    def report(number, ok, detail, status=None):
        status = status or ("PASS" if ok else "FAIL")
        line = f"criterion {number:>2}: {status}  {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
