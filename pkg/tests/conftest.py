import pytest

from qharness.simulate import ProcessKind, sample_ensemble

GRID = (0.25, 0.5, 0.75, 1.0)
SEED = 7
N_PATHS = 100_000


@pytest.fixture(scope="session")
def wiener_ens():
    return sample_ensemble(ProcessKind("wiener"), GRID, N_PATHS, seed=SEED)


@pytest.fixture(scope="session")
def poisson_ens():
    return sample_ensemble(ProcessKind("poisson"), GRID, N_PATHS, seed=SEED)


@pytest.fixture(scope="session")
def gamma_ens():
    return sample_ensemble(ProcessKind("gamma"), GRID, N_PATHS, seed=SEED)


@pytest.fixture(scope="session")
def pascal_ens():
    return sample_ensemble(ProcessKind("pascal", 0.5), GRID, N_PATHS, seed=SEED)


@pytest.fixture(scope="session")
def all_ensembles(wiener_ens, poisson_ens, gamma_ens, pascal_ens):
    return {
        "wiener": wiener_ens,
        "poisson": poisson_ens,
        "gamma": gamma_ens,
        "pascal": pascal_ens,
    }
