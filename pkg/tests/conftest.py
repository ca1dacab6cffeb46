import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from prebsim.driver import OpenSetup  # noqa: E402
from prebsim.freefermion import SystemSpec  # noqa: E402
from prebsim.spectral import Semicircle, ThermalParams  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("default")

# two semicircle baths at different temperature and chemical potential
FIG2_DENSITIES = (Semicircle(1.0, 2.0), Semicircle(2.0, 2.0))
FIG2_THERMALS = (ThermalParams(0.1, 1.5), ThermalParams(0.2, -1.5))


def fig2_setup(L_S=8, V=0.0, h=0.0, pattern=None):
    return OpenSetup.create(SystemSpec(L_S, V, h), FIG2_DENSITIES, FIG2_THERMALS, pattern)


@pytest.fixture
def fig2():
    return fig2_setup


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# --------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the session
# --------------------------------------------------------------------------

_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """``criterion(k, ok, detail)`` records the verdict printed in the summary."""
    store = request.config.stash.setdefault(_CRITERIA, {})

    def record(k, ok, detail):
        store[k] = (bool(ok), detail)
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_CRITERIA, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(store):
        ok, detail = store[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
