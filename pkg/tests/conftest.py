import functools
import sys

import numpy as np
import pytest

from edgescat import (
    BlockConfig,
    CouplingStrengths,
    Grid,
    MassProfile,
    OuParams,
    ProfileKind,
    assemble_system,
    build_plan,
    discretize_ladder,
    transverse_spectrum,
)


@functools.lru_cache(maxsize=None)
def bases(lam: float = 5.0, count: int = 8, points: int = 1201):
    """Tau and O bases on one common grid (cached across tests)."""
    profiles = {k: MassProfile(k, lam) for k in (ProfileKind.TAU, ProfileKind.O)}
    width = max(Grid.for_profile(p, points).half_width for p in profiles.values())
    grid = Grid(width, points)
    return {k: transverse_spectrum(discretize_ladder(p, grid), count) for k, p in profiles.items()}


def make_system(E: float, m_tau=1, n_tau=0, m_o=0, n_o=0, trs=False, lam=5.0):
    return assemble_system(BlockConfig(m_tau, n_tau, m_o, n_o, trs), bases(lam), E)


def make_plan(E: float, strengths=None, plan_trs=None, **blocks):
    system = make_system(E, **blocks)
    return system, build_plan(system, strengths or CouplingStrengths(), plan_trs)


@pytest.fixture(scope="session")
def tau_basis():
    return bases()[ProfileKind.TAU]


@pytest.fixture(scope="session")
def o_basis():
    return bases()[ProfileKind.O]


@pytest.fixture
def ou():
    return OuParams(relaxation=1.0, stddev=1.0, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance.RESULTS):
            terminalreporter.write_line(line)
