import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fastgrating.geometry import BoundaryCurve  # noqa: E402

STAR = BoundaryCurve((0.35, 0.0, 0.0, 0.105))
STAR_THETA = -np.pi / 5


@pytest.fixture(scope="session")
def star():
    return STAR


@pytest.fixture(scope="session")
def star_pre_512():
    from fastgrating.periodic_solver import GratingProblem, precompute

    return precompute(GratingProblem(STAR, 1.0, 10.0, 512))


@pytest.fixture(scope="session")
def star_pre_512_p0():
    from fastgrating.periodic_solver import GratingProblem, precompute

    return precompute(GratingProblem(STAR, 1.0, 10.0, 512, P=0))


@pytest.fixture
def report(request, capsys):
    """Record one PASS/FAIL line for an acceptance criterion.

    The line is printed immediately (outside output capture) and repeated
    in the terminal summary.
    """
    lines = request.config.stash.setdefault(_REPORT_KEY, [])

    def emit(criterion, passed, detail):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        with capsys.disabled():
            print(f"\n{line}", flush=True)
        return passed

    return emit


_REPORT_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
