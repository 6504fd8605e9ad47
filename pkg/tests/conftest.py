import numpy as np
import pytest

from beacon_models.acquisition import ReferenceSet
from beacon_models.gp import Dataset, fit_posterior
from beacon_models.kernels import KernelSpec, coupling_from_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_kernel():
    def _make(family="squared_exponential", d=2, n=1, lengthscale=0.8, signal=1.3, noise=1e-2, seed=0):
        coupling = np.eye(n)
        if n > 1:
            coupling = coupling_from_params(np.random.default_rng(seed).normal(size=n))
        return KernelSpec(
            family=family,
            lengthscales=np.full(d, lengthscale),
            signal_variance=signal,
            noise_variance=noise,
            task_coupling=coupling,
        )

    return _make


@pytest.fixture
def make_data():
    def _make(N=12, d=2, n=1, seed=0, low=0.0, high=1.0):
        r = np.random.default_rng(seed)
        X = r.uniform(low, high, size=(N, d))
        W = r.normal(size=(d, n))
        Y = np.sin(3.0 * X @ W) + 0.05 * r.normal(size=(N, n))
        return Dataset(X, Y)

    return _make


@pytest.fixture
def fitted_gp(make_kernel, make_data):
    data = make_data(N=10, d=2, n=2, seed=3)
    return fit_posterior(data, make_kernel(d=2, n=2, seed=3)), data


@pytest.fixture
def refs_1d():
    return ReferenceSet(points=[[0.0], [1.0], [3.0]], bins=[0, 1, 2], dedup=False)
