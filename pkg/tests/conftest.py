import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lcprobit.samplers import RunConfig, relabel, run_collapsed_gibbs, run_full_gibbs  # noqa: E402
from lcprobit.model import PriorSpec  # noqa: E402
from lcprobit.simulate import builtin_setting, generate  # noqa: E402

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def setting1():
    return generate(builtin_setting(1, seed=11))


@pytest.fixture(scope="session")
def setting1_prior(setting1):
    d = setting1.dataset
    return PriorSpec.default(d.p, d.q)


@pytest.fixture(scope="session")
def setting1_short(setting1, setting1_prior):
    """Short collapsed and full-Gibbs runs on one Setting-1 dataset."""
    cfg = RunConfig(n_iter=2500, burn_in=500, seed=5)
    col = relabel(run_collapsed_gibbs(setting1.dataset, setting1_prior, cfg))
    full = relabel(run_full_gibbs(setting1.dataset, setting1_prior, cfg))
    return col, full


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
