import numpy as np
import pytest
from hypothesis import settings

from wignerlab.ensemble import EnsembleSpec, EntryDistribution, sample_raw

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def gaussian_spec():
    def make(n):
        return EnsembleSpec(n, EntryDistribution.gaussian())

    return make


@pytest.fixture
def small_sample():
    return sample_raw(EnsembleSpec(30, EntryDistribution.gaussian()), seed=11)


def sym(a):
    a = np.asarray(a, dtype=float)
    return np.triu(a) + np.triu(a, 1).T


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
