import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cogslice.ingest import GeneratorConfig, default_scenarios

settings.register_profile("repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_generator():
    """Five scenarios of 600 samples each; enough rows for a quick pipeline."""
    return GeneratorConfig(seed=11, scenarios=default_scenarios(samples=600))


@pytest.fixture(scope="session")
def deployment():
    """Trained normal/emergency models and the categorizer, with build seconds."""
    import time

    from cogslice.pcs import EnvConfig, LoopConfig
    from cogslice.pcs.training import build_deployment

    t0 = time.perf_counter()
    dep = build_deployment(EnvConfig(), LoopConfig())
    return dep, time.perf_counter() - t0


# -- acceptance criteria report -------------------------------------------------

_CRITERIA: dict[str, list[str]] = {}


def pytest_addoption(parser):
    parser.addoption("--external-trace", default=None, help="CRAWDAD-format trace for the optional acceptance check")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    name = report.user_properties and dict(report.user_properties).get("criterion")
    if not name:
        return
    if report.when == "call" or report.outcome != "passed":
        _CRITERIA.setdefault(name, []).append(report.outcome)


def pytest_runtest_setup(item):
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        item.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _CRITERIA.items():
        if "failed" in outcomes:
            tag = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            tag = "SKIP"
        else:
            tag = "PASS"
        terminalreporter.write_line(f"[{tag}] {name}")
