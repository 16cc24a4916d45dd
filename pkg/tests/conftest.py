import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Criterion number -> (verdict, summary); printed at the end of the run."""
    return request.config.stash[_ACCEPTANCE_KEY]


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_ACCEPTANCE_KEY, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        verdict, summary = log[n]
        terminalreporter.write_line(f"criterion {n:2d}: {verdict.upper():4s}  {summary}")
