import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from medpath import fit_pca, transform

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_instance(seed, n=50, q=2, p=3, r=5, mix=1.0):
    """Small centered problem whose exposures are PCA scores."""
    rng = np.random.default_rng(seed)
    Xr = rng.normal(size=(n, r))
    model = fit_pca(Xr, n_components=q)
    X = transform(model, Xr)
    M = X @ (mix * rng.normal(size=(q, p))) + rng.normal(size=(n, p))
    M -= M.mean(axis=0)
    Y = X @ rng.normal(size=q) + M @ rng.normal(size=p) + rng.normal(size=n)
    Y -= Y.mean()
    return X, M, Y


@pytest.fixture
def instance():
    return make_instance
