import numpy as np
import pytest

from warpspec.fiber import circle_spectrum
from warpspec.operator import GridPolicy, SectorProblem, WarpedFamily
from warpspec.profiles import ConstantProfile, ExponentData, make_sqrt_profile


@pytest.fixture(scope="session")
def hyperbolic_family():
    return WarpedFamily(make_sqrt_profile(), ExponentData(-1, 1, 1), circle_spectrum(), 1.0)


@pytest.fixture
def flat_family():
    """rho = 1 on [0, pi] (halfwidth pi/2), so -u'' has Dirichlet spectrum k^2."""
    return WarpedFamily(ConstantProfile(1.0), ExponentData(-1, 1, 1), circle_spectrum(), np.pi / 2)


@pytest.fixture
def hyperbolic_sector(hyperbolic_family):
    def make(mu=0.0, n_min=2001):
        return SectorProblem(hyperbolic_family, mu, GridPolicy(n_min=n_min))
    return make


@pytest.fixture
def make_branch():
    """Synthetic branch sampled geometrically from eps_hi down to eps_lo."""
    from warpspec.tracker import BranchSample, EigenBranch

    def make(lam_fn, dlam_fn=None, eps_hi=0.2, eps_lo=1e-3, n=120, bid="syn", mu=0.0):
        eps = np.geomspace(eps_hi, eps_lo, n)
        lam = lam_fn(eps)
        dlam = dlam_fn(eps) if dlam_fn is not None else np.gradient(lam, eps)
        br = EigenBranch(bid, mu)
        br.samples.extend(BranchSample(float(e), float(l), float(d), 1.0) for e, l, d in zip(eps, lam, dlam))
        return br
    return make


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    def record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
