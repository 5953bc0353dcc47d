import numpy as np
import pytest

from noise_loom.envmodel import build_rtn_env
from noise_loom.sampler import sample_ensemble

GAMMA, OMEGA, DT, K, N_E = 1.0, 2.0, 0.2, 50, 1000


@pytest.fixture(scope="session")
def rtn():
    return build_rtn_env(GAMMA, OMEGA)


@pytest.fixture(scope="session")
def baseline_ensemble(rtn):
    return sample_ensemble(rtn, DT, K, N_E, master_seed=42)


def random_hermitian(rng, d, scale=1.0):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (a + a.conj().T) / 2


def random_density(rng, d, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
