import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from specshare import ChannelDistribution, sample_ensemble
from specshare.pu_policy import apply_pu_policy, make_pu_policy

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def reference_dist():
    return ChannelDistribution(1.0, 1.0, 0.5, 0.01)


@pytest.fixture(scope="session")
def small_raw(reference_dist):
    return sample_ensemble(reference_dist, 4000, 3)


@pytest.fixture(scope="session", params=["cp", "wf"])
def small_ens(request, small_raw):
    return apply_pu_policy(small_raw, make_pu_policy(small_raw, request.param, 10.0))


def positive_arrays(n, lo=0.0, hi=5.0, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, n)


# one line per acceptance criterion, printed after the run (see test_acceptance.py)
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split()[2]):
            terminalreporter.write_line(line)
