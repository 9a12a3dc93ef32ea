import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from lattice_she.errors import PreconditionError
from lattice_she.noise import (CHANNEL_DRIVING, CHANNEL_INITIAL, FAMILIES, NoiseModel, normal_quantile,
                               standard_normals, stream_key, uniforms)


def test_families_are_standardised():
    for fam in FAMILIES:
        mean, var = NoiseModel(fam).first_two_moments()
        assert abs(mean) < 1e-12 and abs(var - 1) < 1e-12


def test_two_point_validation():
    NoiseModel("two-point", p=0.2)
    with pytest.raises(PreconditionError):
        NoiseModel("two-point", p=1.0)
    with pytest.raises(PreconditionError):
        NoiseModel("brownian")


def test_declared_kappa_must_exist():
    with pytest.raises(PreconditionError):
        NoiseModel("gaussian", kappa=-1.0)


@pytest.mark.parametrize("fam", FAMILIES)
def test_sample_moments(fam):
    model = NoiseModel(fam, p=0.3) if fam == "two-point" else NoiseModel(fam)
    x = model.sample(stream_key(1, "moments", 0), (0, 200), (-250, 250)).ravel()
    se = 1 / math.sqrt(x.size)
    assert abs(x.mean()) < 5 * se
    assert abs(np.mean(x * x) - 1) <= 5 * math.sqrt(model.abs_moment(4.0) - 1) * se


@pytest.mark.parametrize("fam", ["gaussian", "uniform", "centered-exponential"])
def test_sample_law_ks(fam):
    model = NoiseModel(fam)
    x = model.sample(stream_key(2, "ks", 0), (0, 100), (0, 100)).ravel()
    cdf = {"gaussian": stats.norm.cdf,
           "uniform": stats.uniform(loc=-math.sqrt(3), scale=2 * math.sqrt(3)).cdf,
           "centered-exponential": stats.expon(loc=-1).cdf}[fam]
    assert stats.kstest(x, cdf).pvalue > 1e-3


def test_mgf_closed_forms():
    g = NoiseModel("gaussian")
    assert g.mgf(0.3) == pytest.approx(math.exp(0.045))
    assert NoiseModel("rademacher").mgf(0.3) == pytest.approx(math.cosh(0.3))
    e = NoiseModel("centered-exponential")
    assert e.mgf(0.5) == pytest.approx(math.exp(-0.5) / 0.5)
    with pytest.raises(PreconditionError):
        e.mgf(1.0)


def test_abs_moment_against_quadrature():
    assert NoiseModel("gaussian").abs_moment(3.0) == pytest.approx(2 * math.sqrt(2 / math.pi))
    assert NoiseModel("uniform").abs_moment(4.0) == pytest.approx(9 / 5)
    # E|E - 1|^2 = 1 for E ~ Exp(1)
    assert NoiseModel("centered-exponential").abs_moment(2.0) == pytest.approx(1.0)


def test_normal_quantile_accuracy():
    p = np.concatenate([np.geomspace(1e-300, 0.5, 500), 1 - np.geomspace(1e-16, 0.5, 500)])
    got = np.array([normal_quantile(v) for v in p])
    ref = special.ndtri(p)
    assert np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1)) < 1e-14


def test_counter_based_streams():
    key = stream_key(7, "exp", 3)
    full = standard_normals(key, (0, 10), (-5, 5))
    part = standard_normals(key, (4, 6), (0, 3))
    assert np.array_equal(full[4:6, 5:8], part)
    assert not np.array_equal(full, standard_normals(stream_key(7, "exp", 4), (0, 10), (-5, 5)))
    assert stream_key(7, "exp", 3, CHANNEL_DRIVING) != stream_key(7, "exp", 3, CHANNEL_INITIAL)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 63), st.integers(0, 10 ** 6), st.integers(-10 ** 6, 10 ** 6))
def test_uniforms_in_open_unit_interval(seed, row, site):
    u = uniforms(stream_key(seed, "u", 0), (row, row + 2), (site, site + 4))
    assert np.all((u > 0) & (u < 1))


def test_neighbouring_cells_uncorrelated():
    z = standard_normals(stream_key(3, "corr", 0), (0, 300), (0, 300))
    n = z[:, :-1].size
    assert abs(np.mean(z[:, :-1] * z[:, 1:])) < 5 / math.sqrt(n)
    assert abs(np.mean(z[:-1] * z[1:])) < 5 / math.sqrt(n)
