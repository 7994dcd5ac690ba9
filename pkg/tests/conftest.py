import numpy as np
import pytest

from pb2.kernels import GpHyperparams
from pb2.schemas.run import RunConfig

FAST_GP = {"n_starts": 2, "max_iter": 40, "n_uniform": 200, "max_records": 128}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quad_config():
    def make(**overrides) -> RunConfig:
        doc = {"policy": "pbt", "B": 4, "T": 20, "t_ready": 2, "seed": 3, "trainer": "quadratic", "gp": FAST_GP}
        doc.update(overrides)
        return RunConfig.model_validate(doc)

    return make


@pytest.fixture
def hp1():
    return GpHyperparams(lengthscales=(0.2,), signal_var=1.0, noise_var=0.01, omega=0.1)


def random_dataset(rng, n, d, rounds=4):
    """(u, t, y) triples with u in the unit cube and rounds 1..rounds."""
    u = rng.uniform(size=(n, d))
    t = rng.integers(1, rounds + 1, size=n)
    y = rng.normal(size=n)
    return [(u[i], int(t[i]), float(y[i])) for i in range(n)]
