import numpy as np
import pytest

from adiaswitch.degeneracy import build_initial_basis, second_order_lift
from adiaswitch.io import load_shipped
from adiaswitch.operators import make_problem
from adiaswitch.switching import Exponential


def random_hermitian(rng, dim, scale=1.0, real=False):
    a = rng.normal(size=(dim, dim))
    if not real:
        a = a + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (a + a.conj().T)


def random_problem(rng, dim=None, degeneracy=None, vscale=0.3):
    """A random problem with an isolated degenerate ground level.

    Excited levels sit at least 1 above the ground level and ``||V||`` is
    kept small so the gap to the rest of the spectrum survives ``lam = 1``.
    """
    dim = dim or int(rng.integers(3, 9))
    n = degeneracy or int(rng.integers(1, min(3, dim - 1) + 1))
    excited = 1.0 + np.sort(rng.uniform(0.0, 2.0, size=dim - n))
    energies = np.concatenate([np.zeros(n), excited])
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    h0 = (q * energies) @ q.conj().T
    v = random_hermitian(rng, dim)
    v *= vscale / np.linalg.norm(v, 2)
    return make_problem(h0, v, degeneracy=n)


@pytest.fixture(scope="session")
def canonical():
    return load_shipped("canonical")


@pytest.fixture(scope="session")
def canonical_basis(canonical):
    return build_initial_basis(canonical)


@pytest.fixture(scope="session")
def toy():
    return load_shipped("commuting_toy")


@pytest.fixture(scope="session")
def lift_problem():
    return load_shipped("lift")


@pytest.fixture(scope="session")
def lifted_basis(lift_problem):
    return second_order_lift(lift_problem, build_initial_basis(lift_problem))


@pytest.fixture(scope="session")
def free_problem():
    """The canonical H0 with no perturbation."""
    return make_problem(np.diag([0.0, 0.0, 1.0, 2.0]), np.zeros((4, 4)))


@pytest.fixture(scope="session")
def commuting_problem():
    """H0 and V share the natural eigenbasis."""
    return make_problem(np.diag([0.0, 0.0, 1.0, 2.0]), np.diag([0.3, -0.2, 0.1, 0.4]))


@pytest.fixture(scope="session")
def exp_profile():
    return Exponential()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
