import math

import numpy as np
import pytest

from lattice_she.errors import AperiodicityError, PreconditionError
from lattice_she.llt import (fractional_moment, fractional_moment_limit, green_limit, green_sum,
                             green_sum_by_pairs, llt_error, llt_rate, potential_growth, potential_kernel,
                             potential_kernel_partial, stable_c, stable_c_closed, tail_probability)
from lattice_she.stable_density import StableLaw
from lattice_she.walk_kernel import biased_walk, diff_walk, lazy_walk, nstep_pmf, simple_walk, zeta_walk


def test_llt_error_size_and_doubling():
    first = llt_error(lazy_walk(), 256, 1.0, 1.0, 1.0)
    second = llt_error(lazy_walk(), 512, 1.0, 1.0, 1.0)
    assert 0 < first.sup_error <= 0.05
    # rate n^{-1/2}: doubling n multiplies the error by 1/sqrt(2)
    assert second.sup_error / first.sup_error == pytest.approx(1 / math.sqrt(2), rel=0.3)


def test_llt_trend_and_degenerate_case():
    assert llt_error(lazy_walk(), 4096, 1.0).sup_error < llt_error(lazy_walk(), 256, 1.0).sup_error
    rep = llt_error(lazy_walk(), 64, 1 / 64, b=0.0)
    assert math.isfinite(rep.sup_error)


def test_llt_nested_windows():
    for n in (128, 512):
        assert llt_error(lazy_walk(), n, 1.0, b=1.0).sup_error <= llt_error(lazy_walk(), n, 1.0, b=0.0).sup_error


def test_llt_refuses_periodic_walk():
    with pytest.raises(AperiodicityError):
        llt_error(simple_walk(), 64, 1.0)
    with pytest.raises(PreconditionError):
        llt_error(lazy_walk(), 64, 1.0, b=2.0)


def test_llt_rate_fit():
    _, fit = llt_rate(lazy_walk(), (256, 512, 1024))
    assert -0.7 <= fit.slope <= -0.3


def test_green_sum_limit():
    assert green_limit(StableLaw(2.0, 0.5), 1.0, 0.0) == pytest.approx(2 / math.sqrt(2 * math.pi), rel=1e-10)
    g = green_sum(diff_walk(lazy_walk()), 2048, 1.0, 0, limit_point=0.0)
    assert g.value == pytest.approx(g.limit, rel=0.05)


def test_green_sum_at_time_zero():
    n = 100
    assert green_sum(lazy_walk(), n, 0.0, 0).value == pytest.approx(n ** -0.5)


@pytest.mark.parametrize("shift", [0, 1, 3])
def test_green_sum_two_routes(shift):
    kernel = lazy_walk(0.3)
    direct = green_sum(diff_walk(kernel), 64, 1.0, shift).value
    assert green_sum_by_pairs(kernel, 64, 1.0, shift) == pytest.approx(direct, abs=1e-10)


def test_return_probability_dominates():
    dk = diff_walk(lazy_walk())
    for j in range(1, 65):
        pm = nstep_pmf(dk, j, (-2 * j, 2 * j))
        assert pm.values.max() <= pm(0) + 1e-15


def test_potential_kernel_examples():
    pk = potential_kernel(diff_walk(lazy_walk()), 64)
    assert pk(0) == 0.0
    assert pk(5) == pk(-5) and pk(5) > 0
    simple_diff = potential_kernel(diff_walk(simple_walk()), 8)
    # {-2: 1/4, 0: 1/2, 2: 1/4} is a lazy walk on 2Z with potential kernel |x|
    assert simple_diff(2) == pytest.approx(2.0, rel=1e-9)
    assert simple_diff(4) == pytest.approx(4.0, rel=1e-9)
    with pytest.raises(PreconditionError):
        simple_diff(3)


def test_potential_kernel_against_partial_sums():
    dk = diff_walk(lazy_walk())
    pk = potential_kernel(dk, 8)
    partial = potential_kernel_partial(dk, 100_000, [1, 4])
    # the tail of the partial sums decays like x^2 / sqrt(steps)
    assert partial[0] == pytest.approx(pk(1), rel=2e-3)
    assert partial[1] == pytest.approx(pk(4), rel=1e-2)


def test_partial_potential_increasing_in_n():
    dk = diff_walk(lazy_walk())
    rows = [potential_kernel_partial(dk, steps, [1, 3, 7]) for steps in (100, 1000, 10_000)]
    assert np.all(np.diff(np.array(rows), axis=0) >= 0)


def test_potential_growth_finite():
    growth = potential_growth(potential_kernel(diff_walk(lazy_walk()), 256), np.arange(1, 257))
    assert np.all(np.isfinite(growth)) and growth.max() < 2


def test_stable_c_two_routes():
    for delta in (0.5, 1.0, 1.5):
        assert stable_c(delta) == pytest.approx(stable_c_closed(delta), rel=1e-8)
    assert stable_c_closed(1.0) == pytest.approx(math.pi / 2)


def test_fractional_moment_limit_and_exact_value():
    lazy = lazy_walk()
    limit = fractional_moment_limit(lazy, 1.0)
    assert limit == pytest.approx(1 / math.sqrt(math.pi), rel=1e-10)  # E|N(0, 1/2)|
    pm = nstep_pmf(lazy, 256)
    exact = float(np.dot(np.abs(pm.sites) / 16.0, pm.values))
    assert fractional_moment(lazy, 256, 1.0) == pytest.approx(exact, rel=1e-8)
    assert fractional_moment(lazy, 4096, 1.0) == pytest.approx(limit, rel=1e-3)


def test_fractional_moment_sup_finite_and_domain():
    vals = [fractional_moment(lazy_walk(), n, 1.0) for n in (16, 64, 256, 1024, 4096)]
    assert max(vals) < 1
    assert fractional_moment(biased_walk(0.0), 100, 0.5) == 0.0
    with pytest.raises(PreconditionError):
        fractional_moment(lazy_walk(), 16, 2.0)


def test_tail_probability():
    assert tail_probability(lazy_walk(), 10, 0) == 1.0
    assert tail_probability(lazy_walk(), 1024, 8 * 32) <= 1e-10


def test_tail_zeta_power_law():
    kernel = zeta_walk(1.5, radius=2000)
    a = kernel.a
    ratios = [tail_probability(kernel, m, m ** ((1 + a) / 1.5)) / m ** -a for m in (64, 128, 256)]
    assert max(ratios) < 10 * min(ratios)
