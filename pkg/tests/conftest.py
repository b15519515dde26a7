import numpy as np
import pytest

from icapm import ModelSpec, SimulationConfig, simulate_panel
from icapm.data import layout


def asym_theta_2(lay):
    """Stationary asymmetric truth for 2-asset experiments.

    Moderate persistence keeps the surface well conditioned for the
    Monte Carlo studies while the indicator loadings stay clearly
    nonzero.
    """
    theta = np.zeros(lay.size)
    theta[lay.kappa_world.start] = np.log(2.0)
    c_mat = np.array([[0.02, 0.0], [0.008, 0.018]])
    theta[lay.c_vech] = c_mat[np.tril_indices(2)]
    theta[lay.a] = [0.30, 0.25]
    theta[lay.b] = [0.75, 0.70]
    if lay.s is not None:
        theta[lay.s] = [0.35, 0.30]
        theta[lay.z] = [0.30, 0.25]
    return theta


@pytest.fixture(scope="session")
def spec2():
    return ModelSpec("asymmetric", 2, 1, 1)


@pytest.fixture(scope="session")
def sim2(spec2):
    """Small asymmetric sample shared by fast tests."""
    theta = asym_theta_2(layout(spec2))
    return simulate_panel(
        SimulationConfig(theta_true=theta, spec=spec2, n_periods=300, seed=42)
    )


def random_psd(rng, n, scale=1.0):
    m = rng.standard_normal((n, n))
    return scale * (m @ m.T) / n + scale * 1e-3 * np.eye(n)


def random_garch_params(rng, n):
    from icapm import GarchParams

    c = np.tril(0.1 * rng.standard_normal((n, n)))
    a = 0.1 + 0.3 * rng.random(n)
    b = 0.3 + 0.5 * rng.random(n)
    s = 0.2 * rng.standard_normal(n)
    z = 0.2 * rng.standard_normal(n)
    return GarchParams(C=c, a=a, b=b, s=s, z=z)
