import numpy as np
import pytest

from stochch.assembly import assemble_operators
from stochch.mesh import build_uniform_mesh


@pytest.fixture(scope="session")
def ops8():
    return assemble_operators(build_uniform_mesh(8))


@pytest.fixture(scope="session")
def ops16():
    return assemble_operators(build_uniform_mesh(16))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def zero_mean(ops, v):
    return v - (ops.ones_mass @ v) / ops.ones_mass.sum()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
