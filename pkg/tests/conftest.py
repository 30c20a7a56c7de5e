import numpy as np
import pytest

from eoklab.continuation import Controls, localized_branch
from eoklab.core import ModelParams


@pytest.fixture
def ok_m04():
    """Classical OK parameters of the 1D snaking study."""
    return ModelParams(sigma=1.0, a=0.0, tau=0.0, m=0.4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def short_branch():
    """L_0 at the classical OK parameters, first few folds only."""
    p = ModelParams(m=0.4)

    def enough(br):
        return "fold-limit" if len(br.folds) >= 6 else None

    return localized_branch(p, 0.0, None, 513, Controls(ds=0.02, ds_max=0.3, max_steps=1500,
                                                          stop=enough))


# --- acceptance report ---------------------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when == "teardown" or (rep.when == "setup" and rep.passed):
        return
    status = "PASS" if rep.passed else "FAIL"
    _ACCEPTANCE[mark.args[0]] = (status, getattr(item, "acceptance_detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
