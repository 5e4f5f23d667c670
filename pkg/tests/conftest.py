import numpy as np
import pytest

from mubspectra.core import build_mub_family


@pytest.fixture(scope="session")
def families():
    cache = {}

    def get(d):
        if d not in cache:
            cache[d] = build_mub_family(d)
        return cache[d]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)



def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod._line(n, *mod.RESULTS[n]))
