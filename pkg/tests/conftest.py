import numpy as np
import pytest

from hftstat.models import random_hermitian, seeded_rng


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def rand_herm(dim, seed, scale=1.0):
    return scale * random_hermitian(dim, seeded_rng(seed))


SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Y = np.array([[0.0, -1j], [1j, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(criterion, passed, detail):
        lines.append(f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        print(lines[-1])
        assert passed, detail

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
