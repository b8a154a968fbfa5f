import numpy as np
import pytest

from stablesplit import DensitySpec, ModelSpace
from stablesplit.rigidity import front_region, splitting_audit
from stablesplit.semilinear import Nonlinearity, initial_guess, newton_solve
from stablesplit.stability import min_eigenpair

SQ2 = np.sqrt(2.0)


@pytest.fixture(scope="session")
def allen_cahn():
    return Nonlinearity.allen_cahn()


@pytest.fixture(scope="session")
def cylinder():
    """Allen-Cahn cylinder R x S^1 truncated at T = 12, h = 0.02 (1201 x 64 nodes)."""
    return ModelSpace.cylinder(12.0, 0.02, [1.28])


@pytest.fixture(scope="session")
def cylinder_solution(cylinder, allen_cahn):
    out = newton_solve(cylinder, allen_cahn, initial_guess(cylinder, "tanh:1.0"), tol=1e-10)
    assert out.converged
    return out


@pytest.fixture(scope="session")
def cylinder_spectral(cylinder_solution, allen_cahn):
    return min_eigenpair(cylinder_solution.u, allen_cahn)


@pytest.fixture(scope="session")
def cylinder_audit(cylinder_solution, cylinder_spectral, allen_cahn):
    return splitting_audit(cylinder_solution.u, allen_cahn, cylinder_spectral)


@pytest.fixture(scope="session")
def drifted_solution(allen_cahn):
    space = ModelSpace.cylinder(12.0, 0.02, [0.64], DensitySpec.linear_slope(0.3))
    out = newton_solve(space, allen_cahn, initial_guess(space, "tanh"), axis_dirichlet=(-1.0, 1.0))
    assert out.converged
    return out


@pytest.fixture(scope="session")
def drifted_audit(drifted_solution, allen_cahn):
    u = drifted_solution.u
    spec = min_eigenpair(u, allen_cahn)
    return splitting_audit(u, allen_cahn, spec, region=front_region(u, 4.0))


# ------------------------------------------------------------------ acceptance summary
_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion; returns a callable(ok, detail)."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})
    number = request.node.get_closest_marker("criterion").args[0]

    def record(ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        assert ok, line

    return record


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
