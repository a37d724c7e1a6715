import numpy as np
import pytest

from abmediation.data import ObservationTable
from abmediation.lsem import LsemSpec, NoiseSpec, simulate


@pytest.fixture
def tiny_table():
    return ObservationTable.from_arrays([0, 0, 1, 1], [1, 3, 4, 6], [0, 1, 0, 1])


@pytest.fixture(scope="session")
def single_mediator_spec():
    return LsemSpec(alpha1=2.0, beta1=3.0, beta3=1.0, kappa1=0.5, gamma1=2.0)


@pytest.fixture(scope="session")
def layered_spec():
    """K=3 upstream, J=2 downstream, M0 feeding M1 only."""
    rng = np.random.default_rng(11)
    return LsemSpec(
        k_upstream=3, j_downstream=2,
        alpha0=rng.uniform(-1, 1, 3), beta0=rng.uniform(-0.5, 0.5, 3),
        alpha1=1.5, beta1=0.4, psi1=rng.uniform(-0.5, 0.5, 3), xi1=rng.uniform(-0.5, 0.5, 3),
        alpha2=rng.uniform(-1, 1, 2), beta2=rng.uniform(-0.5, 0.5, 2),
        Psi2=np.zeros((2, 3)), Xi2=np.zeros((2, 3)),
        psi3=rng.uniform(-0.5, 0.5, 2), xi3=rng.uniform(-0.5, 0.5, 2),
        alpha3=0.3, beta3=0.2, gamma0=np.zeros(3), gamma1=0.8, gamma2=rng.uniform(-0.5, 0.5, 2),
        kappa0=np.zeros(3), kappa1=0.3, kappa2=rng.uniform(-0.5, 0.5, 2),
        noise={"upstream": NoiseSpec("uniform", 1.0), "mediator": NoiseSpec("bernoulli", 0.8, 0.3),
               "downstream": NoiseSpec("normal", 1.0), "outcome": NoiseSpec("normal", 1.2)},
        p_treat=0.4,
    )


@pytest.fixture(scope="session")
def sim_table(layered_spec):
    return simulate(layered_spec, 10_000, 7)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
