import numpy as np
import pytest

from fedcell import channel as ch
from fedcell import net


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy3():
    """Indoor-like scenario with 3 equal-bandwidth subchannels."""
    return ch.toy_scenario(n_subchannels=3)


@pytest.fixture
def small_topology():
    return net.Topology(obs_dim=5, hidden1=8, hidden2=8, n_channels=3, critic_hidden=4)


def finite_difference(f, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of the flat vector.

    ``f`` must read the current contents of ``theta`` (views are fine).
    """
    g = np.zeros_like(theta)
    for j in range(len(theta)):
        orig = theta[j]
        theta[j] = orig + h
        fp = f()
        theta[j] = orig - h
        fm = f()
        theta[j] = orig
        g[j] = (fp - fm) / (2.0 * h)
    return g


def relative_errors(analytic: np.ndarray, numeric: np.ndarray,
                    floor: float = 1e-3) -> np.ndarray:
    """Per-coordinate relative error with a floor so FD noise on near-zero
    coordinates does not dominate."""
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return np.abs(analytic - numeric) / denom
