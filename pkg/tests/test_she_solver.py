import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lattice_she.continuum_ref import discrete_additive_variance
from lattice_she.errors import NumericalGuardError, PreconditionError
from lattice_she.noise import CHANNEL_DRIVING, CHANNEL_INITIAL, NoiseModel, stream_key
from lattice_she.she_solver import (InitialProfile, Nonlinearity, SHEConfig, contraction_delta, contraction_sum,
                                    harness_transform, increment_path, initial_term_variance, lattice_floor,
                                    moment_estimate, picard_solve, resolve_window, scaled_field, scaled_index,
                                    solve, solve_ensemble, step)
from lattice_she.walk_kernel import biased_walk, lazy_walk, nstep_pmf, simple_walk


def test_lattice_floor_snaps_rounding():
    assert lattice_floor(100 * 0.29) == 29
    assert lattice_floor(2.5) == 2 and lattice_floor(-0.5) == -1


def test_scaled_index_examples():
    assert scaled_index(100, 2.0, 0.5, 0.5, 0.0) == (50, -25)
    assert scaled_index(64, 2.0, 0.0, 1.0, 0.5) == (64, 4)


def test_step_by_hand():
    cfg = SHEConfig(simple_walk(), sigma=Nonlinearity("identity"), n=16)
    layer = np.array([0.0, 2.0, 4.0, 0.0])
    row = np.array([1.0, -1.0, 0.5, 0.0])
    # interior averages 2, 1 plus u * xi / n^{1/4} (= /2)
    out = step(layer, cfg, row)
    assert out == pytest.approx([1.0, 2.0 - 1.0, 1.0 + 1.0, 2.0])


def test_step_drift_and_guard():
    cfg = SHEConfig(lazy_walk(), sigma=Nonlinearity("zero"), drift=Nonlinearity("one"), n=10)
    assert step(np.ones(5), cfg, np.zeros(5))[2] == pytest.approx(1.1)
    with pytest.raises(NumericalGuardError):
        step(np.array([1e13, 1e13, 1e13]), cfg, np.zeros(3))


def test_solver_matches_explicit_duhamel_loop():
    cfg = SHEConfig(lazy_walk(), NoiseModel("rademacher"), Nonlinearity("bounded-sine", beta=0.8),
                    Nonlinearity("clipped-linear", beta=0.5, cap=0.3), n=8, T=1.0,
                    initial=InitialProfile("constant", value=1.0), seed=11)
    field = solve(cfg, replica=3)
    lo = field.lo
    width = field.layers.shape[1]
    key = stream_key(11, "she", 3, CHANNEL_DRIVING)
    rows = cfg.noise.sample(key, (0, cfg.steps), (lo, lo + width))
    u = np.ones(width)
    for i in range(cfg.steps):
        u = step(u, cfg, rows[i])
        assert field.layer(i + 1) == pytest.approx(u, abs=1e-13)


def test_zero_noise_gives_semigroup():
    kernel = biased_walk(0.2)
    cfg = SHEConfig(kernel, sigma=Nonlinearity("zero"), n=16, initial=InitialProfile("dirac"))
    field = solve(cfg, retain="final", obs=(-5, 0))
    pm = nstep_pmf(kernel, 16)
    assert field.value(16, 0) == pytest.approx(4.0 * pm(0), abs=1e-14)
    assert field.value(16, -3) == pytest.approx(4.0 * pm(3), abs=1e-14)


def test_solver_determinism_and_threads():
    cfg = SHEConfig(lazy_walk(), sigma=Nonlinearity("identity"), n=32, initial=InitialProfile(value=1.0), seed=5)
    assert np.array_equal(solve(cfg, 2).layers, solve(cfg, 2).layers)
    a = solve_ensemble(cfg, 200, [16, 32], [-3, 0, 3], threads=1)
    b = solve_ensemble(cfg, 200, [16, 32], [-3, 0, 3], threads=2)
    assert np.array_equal(a.values, b.values)
    c = solve_ensemble(cfg, 100, [32], [0], threads=1, first_replica=100)
    assert np.array_equal(c.at(32, 0), a.values[100:, 1, 1])


def test_ensemble_matches_single_solve():
    cfg = SHEConfig(lazy_walk(), sigma=Nonlinearity("identity"), n=32, initial=InitialProfile(value=1.0), seed=9)
    ens = solve_ensemble(cfg, 5, [32], [0])
    for r in range(5):
        assert ens.at(32, 0)[r] == solve(cfg, r, retain="final").value(32, 0)


def test_additive_variance_monte_carlo():
    n = 64
    cfg = SHEConfig(lazy_walk(), sigma=Nonlinearity("one"), n=n, seed=2)
    vals = solve_ensemble(cfg, 4000, [n], [0]).at(n, 0)
    exact = discrete_additive_variance(lazy_walk(), n, n)
    se = exact * math.sqrt(2 / vals.size)
    assert abs(np.mean(vals ** 2) - exact) < 4 * se


def test_scaled_field_lookup():
    cfg = SHEConfig(biased_walk(0.5), sigma=Nonlinearity("zero"), n=16, initial=InitialProfile(value=2.0))
    field = solve(cfg, obs=(-4, 0))
    assert scaled_field(field, 0.5, 0.0) == field.value(8, -4)


def test_resolve_window_rejects_leaky_window():
    cfg = SHEConfig(lazy_walk(), n=64, window=(-3, 3))
    with pytest.raises(PreconditionError):
        resolve_window(cfg, 0, 0)
    with pytest.raises(PreconditionError):
        resolve_window(SHEConfig(lazy_walk(), n=64, window=(-3, 3)), 5, 5)


def test_picard_constant_sigma_stops_after_one_step():
    cfg = SHEConfig(lazy_walk(), sigma=Nonlinearity("one"), n=32, initial=InitialProfile(value=1.0))
    rep = picard_solve(cfg, 3, 50)
    assert rep.delta == 0.0
    assert rep.w_squared[0] > 0 and np.all(rep.w_squared[1:] == 0)


def test_picard_contracts_for_linear_sigma():
    cfg = SHEConfig(lazy_walk(), sigma=Nonlinearity("identity"), n=64, initial=InitialProfile(value=1.0))
    rep = picard_solve(cfg, 4, 200)
    assert rep.contraction < 0.5 + 1e-6
    assert np.all(rep.ratios()[:2] <= 0.6)


def test_contraction_delta_meets_condition():
    d = contraction_delta(lazy_walk(), 128, 1.0, 1.5)
    assert 2.25 * contraction_sum(lazy_walk(), 128, 1.0, d) < 0.5
    assert 2.25 * contraction_sum(lazy_walk(), 128, 1.0, 0.99 * d) >= 0.5
    assert contraction_delta(lazy_walk(), 128, 1.0, 0.0) == 0.0


def test_moment_estimate_preconditions():
    cfg = SHEConfig(lazy_walk(), NoiseModel("gaussian"), Nonlinearity("one"), n=16)
    with pytest.raises(PreconditionError):
        moment_estimate(cfg, 1.0, 0.0, 2, 10)
    with pytest.raises(PreconditionError):
        moment_estimate(SHEConfig(lazy_walk(), NoiseModel("two-point", kappa=1.0), n=16), 1.0, 0.0, 4, 200)
    est = moment_estimate(cfg, 1.0, 0.0, 2, 400)
    assert est.ci_low <= est.value <= est.ci_high and est.excluded == 0


def test_harness_transform_examples():
    h = np.array([[0.0, 1.0, 2.0], [0.5, 1.5, 2.5]])
    u = harness_transform(h, rho0=1.0, mu=0.5, n=16, lo=0)
    # layer 1 subtracts rho0 mu = 0.5, each site subtracts rho0 k
    assert np.allclose(u.layers, 0.0)
    v = harness_transform(np.array([[3.0]]), 2.0, 0.0, 16, 1)
    assert v.layers[0, 0] == pytest.approx((3.0 - 2.0) / 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_increment_path_is_a_walk(seed):
    key = stream_key(seed, "x", 0, CHANNEL_INITIAL)
    sites = np.arange(-25, 26)
    path = increment_path(NoiseModel("rademacher"), 1.0, key, sites)
    assert path[25] == 0.0
    draws = NoiseModel("rademacher").sample(key, (0, 1), (-25, 26))[0]
    # S(l) - S(l - 1) = eta(l) on both sides of the origin
    assert np.array_equal(np.diff(path), draws[1:])


def test_initial_term_variance_monte_carlo():
    kernel, n, steps, lam = lazy_walk(), 64, 64, 1.0
    pm = nstep_pmf(kernel, steps)
    sites = pm.sites
    vals = []
    for r in range(3000):
        u0 = n ** -0.25 * increment_path(NoiseModel("gaussian"), lam, stream_key(1, "v", r, CHANNEL_INITIAL), sites)
        vals.append(float(np.dot(pm.values, u0)))
    exact = initial_term_variance(kernel, n, steps, 0, lam)
    assert np.var(vals) == pytest.approx(exact, rel=0.1)
