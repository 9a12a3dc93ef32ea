import numpy as np
import pytest

from lattice_she.stats import bootstrap_ci, loglog_fit


def test_loglog_exact_power():
    x = np.array([1, 2, 4, 8, 16.0])
    slope, err = loglog_fit(x, 3 * x ** -0.5)
    assert slope == pytest.approx(-0.5, abs=1e-12) and err < 1e-12


def test_bootstrap_deterministic_and_covers_mean():
    rng = np.random.default_rng(0)
    x = rng.normal(1.0, 1.0, 400)
    lo, hi = bootstrap_ci(x, seed=5)
    assert (lo, hi) == bootstrap_ci(x, seed=5)
    assert lo < x.mean() < hi
    assert bootstrap_ci(np.full(10, 2.0)) == (2.0, 2.0)
