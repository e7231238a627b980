import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from ergobound.model import BirthDeathSpec  # noqa: E402
from ergobound.oracle import GeneratorMatrix  # noqa: E402

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")

DEMO_MODELS = Path(__file__).resolve().parent.parent / "demos" / "models"


def random_reversible(n, rng, density=0.6):
    """Random irreducible reversible generator on ``n`` states.

    Symmetric conductances ``c_ij`` on a spanning path plus random extra
    edges, and weights ``pi``; ``q_ij = c_ij / pi_i``.
    """
    pi = rng.uniform(0.2, 2.0, n)
    C = np.zeros((n, n))
    for i in range(n - 1):
        C[i, i + 1] = rng.uniform(0.3, 2.0)
    extra = rng.uniform(size=(n, n)) < density
    C += np.triu(extra * rng.uniform(0.1, 2.0, (n, n)), 2)
    C = C + C.T
    Q = C / pi[:, None]
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return GeneratorMatrix(Q, np.log(pi / pi.sum()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_state():
    return BirthDeathSpec.from_strings("1", "1", size=2)


@pytest.fixture
def quadratic_chain():
    return BirthDeathSpec.from_strings("1", "(i+1)^2")


# -- one summary line per acceptance criterion --------------------------------

_criteria: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.failed:
        detail = []
        if report.failed:
            crash = getattr(report.longrepr, "reprcrash", None)
            detail = [crash.message.splitlines()[0]] if crash else report.longreprtext.splitlines()[-1:]
        _criteria[name] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        outcome, tail = _criteria[name]
        label = name.removeprefix("test_").replace("_", " ", 1)
        line = f"{label:<40} {'PASS' if outcome == 'passed' else 'FAIL'}"
        if tail:
            line += f"  ({tail[0].strip()[:160]})"
        terminalreporter.write_line(line)
