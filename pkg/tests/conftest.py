import numpy as np
import pytest

from tails2d.background import make_background
from tails2d.foliation import make_foliation


@pytest.fixture(scope="session")
def mink():
    return make_background("minkowski")


@pytest.fixture(scope="session")
def pert():
    return make_background("default-perturbed", 0.05, 2.0)


@pytest.fixture(scope="session")
def mink_fol(mink):
    return make_foliation(mink)


@pytest.fixture(scope="session")
def pert_fol(pert):
    return make_foliation(pert)


@pytest.fixture(params=["minkowski", "perturbed"])
def setup(request, mink, pert, mink_fol, pert_fol):
    if request.param == "minkowski":
        return mink, mink_fol
    return pert, pert_fol


def simpson(f, a, b, n=10**6):
    """Composite Simpson rule with n (even) intervals: the brute-force oracle."""
    x = np.linspace(a, b, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (b - a) / (3.0 * n) * np.dot(w, f(x))


_VERDICTS = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line; the lines are repeated in the terminal summary."""
    def record(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        _VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
