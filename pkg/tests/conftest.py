import numpy as np
import pytest

from xxz_torus.exact_diag import dense_spectrum
from xxz_torus.model import ModelParams


@pytest.fixture(scope="session")
def dense_cache():
    """Memoized full dense spectra keyed by (n_sites, eta)."""
    cache = {}

    def get(n, eta):
        key = (n, float(eta))
        if key not in cache:
            cache[key] = dense_spectrum(ModelParams(n, eta)).energies
        return cache[key]

    return get
