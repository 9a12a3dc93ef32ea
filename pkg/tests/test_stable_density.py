import math

import numpy as np
import pytest
from scipy import integrate

from lattice_she.errors import PreconditionError
from lattice_she.stable_density import (StableLaw, density, derivative_ratio_sweep, l2_norm_sq, scaling_check,
                                        time_derivative_ratio)

GAUSS = StableLaw(2.0, 0.25)
STABLE = StableLaw(1.5, 1.0)


def test_gaussian_value():
    assert density(GAUSS, 1.0, 0.0) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-12)


def test_stable_value_at_origin():
    # (1/pi) int_0^inf exp(-z^{3/2}) dz = Gamma(5/3) / pi
    assert density(STABLE, 1.0, 0.0) == pytest.approx(math.gamma(5 / 3) / math.pi, abs=1e-9)


def test_stable_matches_direct_quadrature():
    x = 1.7
    ref = integrate.quad(lambda z: math.exp(-z ** 1.5) * math.cos(x * z), 0, 60, limit=400)[0] / math.pi
    assert density(STABLE, 1.0, x) == pytest.approx(ref, abs=1e-9)


def test_symmetry_and_unimodality():
    xs = np.linspace(0, 6, 61)
    vals = density(STABLE, 0.7, xs)
    assert np.allclose(vals, density(STABLE, 0.7, -xs), atol=1e-14)
    assert np.all(np.diff(vals) <= 1e-12)


def test_alpha_two_closed_form():
    xs = np.linspace(-3, 3, 13)
    var = 2 * 0.25 * 0.8
    assert np.allclose(density(GAUSS, 0.8, xs), np.exp(-xs ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var),
                       atol=1e-10)


def test_normalisation():
    total = integrate.quad(lambda x: density(STABLE, 1.0, x), -np.inf, np.inf, limit=400)[0]
    assert total == pytest.approx(1.0, abs=1e-6)


def test_singular_time_refused():
    with pytest.raises(PreconditionError):
        density(GAUSS, 0.0, 0.0)


def test_scaling():
    assert scaling_check(GAUSS, 1.0, 0.3, 1.0) == 0.0
    assert scaling_check(GAUSS, 1.0, 0.3, 2.0) <= 1e-7
    assert scaling_check(STABLE, 0.5, 1.0, 3.0) <= 1e-6


def test_time_derivative_ratio():
    assert time_derivative_ratio(GAUSS, 1.0, 0.0) == pytest.approx(0.5, rel=1e-6)
    worst, table = derivative_ratio_sweep(STABLE, [0.1, 1.0], np.linspace(-5, 5, 11))
    assert np.all(np.isfinite(table)) and worst < 10


def test_l2_norm_gaussian():
    for t in (0.3, 1.0, 2.5):
        assert l2_norm_sq(GAUSS, t) == pytest.approx((8 * math.pi * 0.25 * t) ** -0.5, rel=1e-8)


def test_l2_norm_self_similar():
    assert l2_norm_sq(STABLE, 0.4) == pytest.approx(0.4 ** (-1 / 1.5) * l2_norm_sq(STABLE, 1.0), rel=1e-8)


def test_semigroup():
    s, t, x = 0.4, 0.6, 0.5
    conv = integrate.quad(lambda y: density(STABLE, s, y) * density(STABLE, t, x - y), -60, 60, limit=400)[0]
    assert conv == pytest.approx(density(STABLE, s + t, x), abs=1e-6)
