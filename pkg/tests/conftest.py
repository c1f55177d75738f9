import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qs3orao.data import SemiSupervisedSplit, make_ordinal_blobs

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def separable_split():
    """Three classes at -2, 0, 2 (noise 0.3): 20 labeled per class plus 2000 unlabeled rows."""
    lab = make_ordinal_blobs(20, seed=1)
    unl = make_ordinal_blobs([667, 667, 666], seed=2).features
    return SemiSupervisedSplit(lab, unl, 0)


@pytest.fixture(scope="session")
def separable_test():
    return make_ordinal_blobs(200, seed=3)


@pytest.fixture(scope="session")
def small_split():
    """Tiny split for exact-kernel checks."""
    lab = make_ordinal_blobs(4, seed=11)
    unl = make_ordinal_blobs([3, 3, 3], seed=12).features
    return SemiSupervisedSplit(lab, unl, 0)


@pytest.fixture(scope="session")
def separable_model(separable_split):
    from qs3orao.trainer import TrainConfig, train

    cfg = TrainConfig(lam=1.0, theta=1.5, gamma=0.5, m=32, t_max=2000, batch=1, master_seed=0)
    return train(separable_split, cfg)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        marker = report.user_properties and dict(report.user_properties).get("_acceptance")
        if marker:
            _ACCEPTANCE[marker[0]] = (marker[1], report.outcome, report.user_properties)


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark:
            item.user_properties.append(("_acceptance", mark.args))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome, props = _ACCEPTANCE[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        details = ", ".join(f"{k}={v}" for k, v in props if not k.startswith("_"))
        terminalreporter.write_line(f"criterion {number}: {status}  {title}  [{details}]")


_ACCEPTANCE = {}
