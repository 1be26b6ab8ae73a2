import numpy as np
import pytest

from dslpid.lti import RationalTF, tf_to_ss
from dslpid.loop import LoopConfig, simulate_loop
from dslpid.signals import RngStream, Signal, prbs_generate

# descending coefficients, as the expressions are usually written
PLANT = RationalTF.from_descending([1, 0, 0], [1, -1.6, 0.89])
NOISE = RationalTF.from_descending([1, -1.56, 1.045, -0.3338], [1, -2.35, 2.09, -0.6675])
K_STRICT = RationalTF.from_descending([-1, 0.8], [1, 0, 0])
K_PROPER = RationalTF.from_descending([-1, 0.8], [1, 0])


def make_dataset(controller=K_STRICT, sigma=0.0, seed=1, plant=PLANT, periods=10, stream=0):
    r2 = prbs_generate(9, 10.0, periods)
    cfg = LoopConfig(plant, controller, NOISE, Signal(np.zeros(len(r2)), "r1"), r2, sigma, RngStream(seed, stream))
    return simulate_loop(cfg)


@pytest.fixture(scope="session")
def plant():
    return PLANT


@pytest.fixture(scope="session")
def k_strict():
    return K_STRICT


@pytest.fixture(scope="session")
def k_strict_ss():
    return tf_to_ss(K_STRICT)


@pytest.fixture(scope="session")
def noiseless_data():
    return make_dataset(sigma=0.0)


@pytest.fixture(scope="session")
def noisy_data():
    return make_dataset(sigma=2.0, seed=7)
