import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lattice_she.errors import PreconditionError
from lattice_she.noise import NoiseModel
from lattice_she.polymer import (ComparisonFields, PolymerEnvironment, comparison_fields,
                                 comparison_second_moments, exp_linearization_check, inverse_temperature,
                                 partition_direct, partition_ensemble, polymer_window, quenched_endpoint,
                                 reversed_field, second_moment_exact, transfer_solve)
from lattice_she.walk_kernel import biased_walk, from_table, lazy_walk, simple_walk

RAD = NoiseModel("rademacher")


def _env(xi, lo, b, noise=RAD):
    return PolymerEnvironment(np.asarray(xi, dtype=float), lo, b, noise)


def test_inverse_temperature():
    assert inverse_temperature(2.0, 16, 2.0) == pytest.approx(1.0)
    assert inverse_temperature(1.0, 8, 1.5) == pytest.approx(8 ** (-1 / 6))


def test_one_step_by_hand():
    b = 0.3
    xi = [[0.0, 1.0, 0.0], [-1.0, 0.0, 1.0]]
    env = _env(xi, -1, b)
    z = math.exp(b) * (0.5 * math.exp(-b) + 0.5 * math.exp(b))
    assert partition_direct(env, simple_walk()) == pytest.approx(z)
    res = transfer_solve(env, simple_walk(), 1)
    assert res.M == pytest.approx(z / math.cosh(b) ** 2)
    assert res.point_to_point == pytest.approx(np.array([0.5, 0.0, 0.5]) * math.exp(b) * np.exp(b * np.array(xi[1]))
                                               / math.cosh(b) ** 2)


def test_zero_temperature_and_constant_disorder():
    env = PolymerEnvironment.sample(RAD, 0.0, 16, 2.0, polymer_window(lazy_walk(), 16))
    assert transfer_solve(env, lazy_walk(), 16).M == pytest.approx(1.0, abs=1e-12)
    window = polymer_window(lazy_walk(), 10)
    xi = np.full((11, window[1] - window[0] + 1), 1.0)
    b = 0.2
    const = _env(xi, window[0], b)
    expected = (math.exp(b) / math.cosh(b)) ** 11
    assert transfer_solve(const, lazy_walk(), 10).M == pytest.approx(expected, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 7), st.sampled_from(["lazy", "simple", "biased", "table"]))
def test_transfer_matches_enumeration(seed, steps, which):
    kernel = {"lazy": lazy_walk(0.3), "simple": simple_walk(), "biased": biased_walk(0.4),
              "table": from_table({-2: 0.2, 0: 0.3, 1: 0.5})}[which]
    env = PolymerEnvironment.sample(NoiseModel("gaussian"), 1.0, 8, 2.0, (-2 * steps - 2, 2 * steps + 2),
                                    seed=seed, steps=steps)
    res = transfer_solve(env, kernel, steps)
    norm = env.mgf ** (steps + 1)
    assert res.M == pytest.approx(partition_direct(env, kernel) / norm, rel=1e-12)
    for x in (-1, 0, 2):
        direct = partition_direct(env, kernel, endpoint=x) / norm
        assert res.point_to_point[x - env.lo] == pytest.approx(direct, rel=1e-12, abs=1e-300)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([lazy_walk(), simple_walk(), biased_walk(0.3)]))
def test_reversed_field_gives_partition_function(seed, kernel):
    n = 12
    env = PolymerEnvironment.sample(RAD, 1.0, n, 2.0, (-20, 20), seed=seed)
    layers = reversed_field(env.reversed(), kernel)
    assert layers[-1][-env.lo] == pytest.approx(transfer_solve(env, kernel, n).M, rel=1e-12)
    assert layers.shape == (n + 1, 41)


def test_enumeration_limits():
    env = PolymerEnvironment.sample(RAD, 1.0, 13, 2.0, (-14, 14))
    with pytest.raises(PreconditionError):
        partition_direct(env, lazy_walk())
    with pytest.raises(PreconditionError):
        partition_direct(PolymerEnvironment.sample(RAD, 1.0, 4, 2.0, (-2, 2)), simple_walk())


def test_environment_preconditions():
    with pytest.raises(PreconditionError):
        PolymerEnvironment.sample(NoiseModel("centered-exponential"), 2.0, 1, 2.0, (-4, 4))
    with pytest.raises(PreconditionError):
        transfer_solve(PolymerEnvironment.sample(RAD, 1.0, 64, 2.0, (-3, 3)), lazy_walk(), 64)
    with pytest.raises(PreconditionError):
        quenched_endpoint(PolymerEnvironment.sample(RAD, 1.0, 8, 2.0, (-20, 20)), biased_walk(0.5), 8)


def test_quenched_law_is_a_distribution():
    env = PolymerEnvironment.sample(NoiseModel("gaussian"), 1.0, 64, 2.0, polymer_window(lazy_walk(), 64), seed=7)
    res = quenched_endpoint(env, lazy_walk(), 64)
    assert np.all(res.point_to_point >= 0)
    assert res.quenched_law.sum() == pytest.approx(1.0)
    assert res.scaled_point_to_point.sum() == pytest.approx(8 * res.M)


def test_second_moment_one_step_by_hand():
    b = inverse_temperature(1.0, 1, 2.0)
    rho = math.cosh(2 * b) / math.cosh(b) ** 2
    assert second_moment_exact(simple_walk(), RAD, 1.0, 1) == pytest.approx(rho * (rho + 1) / 2, rel=1e-12)
    assert second_moment_exact(lazy_walk(), RAD, 0.0, 50) == pytest.approx(1.0)


def test_martingale_mean_and_second_moment():
    n, reps = 128, 4000
    vals, excluded = partition_ensemble(RAD, lazy_walk(), 1.0, n, reps, seed=3)
    assert excluded == 0 and np.all(vals > 0)
    se = vals.std(ddof=1) / math.sqrt(reps)
    assert abs(vals.mean() - 1.0) < 4 * se
    sq = vals ** 2
    assert abs(sq.mean() - second_moment_exact(lazy_walk(), RAD, 1.0, n)) < 4 * sq.std(ddof=1) / math.sqrt(reps)


def test_ensemble_matches_transfer_and_threads():
    n = 32
    vals, _ = partition_ensemble(RAD, lazy_walk(), 1.0, n, 6, seed=2, threads=1)
    again, _ = partition_ensemble(RAD, lazy_walk(), 1.0, n, 6, seed=2, threads=2)
    assert np.array_equal(vals, again)
    window = polymer_window(lazy_walk(), n)
    for r in range(6):
        env = PolymerEnvironment.sample(RAD, 1.0, n, 2.0, window, seed=2, replica=r)
        assert vals[r] == pytest.approx(transfer_solve(env, lazy_walk(), n).M, rel=1e-12)


def test_linearization_closed_forms():
    n = 64
    b = inverse_temperature(1.0, n, 2.0)
    g = exp_linearization_check(NoiseModel("gaussian"), 1.0, n)
    assert g.multiplier == pytest.approx(math.expm1(b * b), rel=1e-8)
    r = exp_linearization_check(RAD, 1.0, n)
    assert r.multiplier == pytest.approx(math.tanh(b) ** 2, rel=1e-10)
    up = math.exp(b) / math.cosh(b) - 1 - b
    down = math.exp(-b) / math.cosh(b) - 1 + b
    assert r.remainder == pytest.approx(0.5 * (up * up + down * down), rel=1e-10)
    assert exp_linearization_check(RAD, 0.0, n).remainder == 0.0


def test_linearization_rates():
    # squared L^4 norms: n^{-1/2} for Z - 1 and n^{-1} for the remainder, up to O(b^2) corrections
    rows = [exp_linearization_check(NoiseModel("gaussian"), 1.0, n, order=4.0) for n in (2 ** 14, 2 ** 18)]
    slope_mult = math.log(rows[1].multiplier / rows[0].multiplier) / math.log(16)
    slope_rem = math.log(rows[1].remainder / rows[0].remainder) / math.log(16)
    assert slope_mult == pytest.approx(-0.5, abs=0.02)
    assert slope_rem == pytest.approx(-1.0, abs=0.02)


def test_comparison_fields_start_and_identities():
    n = 16
    fields = comparison_fields(RAD, lazy_walk(), 1.0, n, 50, sites=(0, 3), seed=1)
    assert fields.values.shape == (50, 4, 2)
    # Rademacher disorder with equal signs keeps every field positive
    assert np.all(fields.field("w_star") > 0) and np.all(fields.field("w") > 0)
    assert set(fields.distances()) == {"u-w_tilde", "w_tilde-w_star", "w_star-w"}
    zero = comparison_fields(RAD, lazy_walk(), 0.0, n, 3)
    assert np.allclose(zero.values, 1.0)


def test_comparison_distance_is_sup_over_sites():
    vals = np.zeros((2, 4, 2))
    vals[:, 0, 1] = 2.0
    fields = ComparisonFields(4, np.array([0, 1]), vals)
    assert fields.distance("u", "w_tilde", 2.0) == pytest.approx(2.0)


def test_comparison_monte_carlo_matches_exact_second_moments():
    # u - w_tilde is heavy tailed at larger n, which biases small-sample means low
    n, reps = 16, 4000
    fields = comparison_fields(RAD, lazy_walk(), 1.0, n, reps, seed=5)
    exact = comparison_second_moments(lazy_walk(), RAD, 1.0, n)
    for a, b in (("u", "w_tilde"), ("w_tilde", "w_star"), ("w_star", "w")):
        d2 = (fields.field(a) - fields.field(b))[:, 0] ** 2
        assert abs(d2.mean() - exact[f"{a}-{b}"]) < 4 * d2.std(ddof=1) / math.sqrt(reps)
    with pytest.raises(PreconditionError):
        comparison_second_moments(biased_walk(0.3), RAD, 1.0, 8)
