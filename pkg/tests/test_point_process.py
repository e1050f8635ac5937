import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats as sps

from thinning.errors import DomainError, UnsupportedSpec
from thinning.point_process import (
    ExpTilt,
    LebesgueMarginal,
    PowerLaw,
    TiltedLebesgue,
    arrivals_from_exponentials,
    dropped_mass_sample,
    sample_ppp_inverse_mass,
    sample_ppp_window,
    sample_tilted_lebesgue,
    sample_unit_arrivals,
    sinusoidal_density,
    tilted_tail_mass,
    truncation_error_bound,
)
from thinning.seeding import SeedSpec
from thinning.stats import chi_square_poisson


def test_arrivals_cumulative_sum():
    assert np.allclose(arrivals_from_exponentials([0.5, 1.0, 0.25]), [0.5, 1.5, 1.75])
    assert np.allclose(arrivals_from_exponentials([2.0]), [2.0])


def test_arrival_mean_law_of_large_numbers():
    rng = SeedSpec(1).generator()
    e10 = np.array([sample_unit_arrivals(10, rng)[-1] for _ in range(100_000)])
    se = e10.std(ddof=1) / math.sqrt(e10.size)
    assert abs(e10.mean() - 10.0) < 3 * se


def test_inverse_mass_examples():
    assert np.allclose(sample_ppp_inverse_mass(PowerLaw(0.5), 2, arrivals=[1.0, 4.0]), [1.0, 0.0625])
    assert np.allclose(sample_ppp_inverse_mass(ExpTilt(1.0), 3, arrivals=[1.0, math.e, math.e**2]), [0.0, 1.0, 2.0])


def test_power_law_domain():
    for m in (0.0, 1.0, 1.5, -0.2):
        with pytest.raises(DomainError):
            PowerLaw(m)
    with pytest.raises(DomainError):
        ExpTilt(0.0)
    with pytest.raises(UnsupportedSpec):
        sample_ppp_inverse_mass(LebesgueMarginal(), 3, seed=0)


@given(st.floats(0.05, 0.95), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_orderings(m, seed):
    x = sample_ppp_inverse_mass(PowerLaw(m), 50, SeedSpec(seed))
    y = sample_ppp_inverse_mass(ExpTilt(m + 1.0), 50, SeedSpec(seed))
    assert np.all(np.diff(x) < 0)
    assert np.all(np.diff(y) > 0)


def test_count_above_threshold_is_poisson():
    # number of atoms above 0.1 is Poisson(0.1^{-1/2})
    rate = 0.1**-0.5
    counts = []
    for r in range(4000):
        x = sample_ppp_inverse_mass(PowerLaw(0.5), 40, SeedSpec(2, 0, (r,)))
        counts.append(int(np.sum(x > 0.1)))
    rep = chi_square_poisson(counts, rate)
    assert rep.passed, rep


def test_campbell_and_laplace():
    a, b, c, m = 0.05, 0.5, 0.7, 0.5
    n_in = []
    lap = []
    for r in range(20_000):
        x = sample_ppp_inverse_mass(PowerLaw(m), 30, SeedSpec(3, 0, (r,)))
        k = int(np.sum((x > a) & (x < b)))
        n_in.append(k)
        lap.append(math.exp(-c * k))
    n_in, lap = np.array(n_in), np.array(lap)
    mean = a**-m - b**-m
    assert abs(n_in.mean() - mean) < 3 * n_in.std(ddof=1) / math.sqrt(n_in.size)
    target = math.exp(-(1 - math.exp(-c)) * mean)
    assert abs(lap.mean() - target) < 3 * lap.std(ddof=1) / math.sqrt(lap.size)


def test_truncation_bound_closed_form_and_quadrature():
    assert truncation_error_bound(0.5, 0.01) == pytest.approx(0.1, rel=1e-12)
    for m, eps in ((0.3, 0.2), (0.7, 1e-3)):
        q, _ = integrate.quad(lambda x: x * m * x ** (-m - 1), 0.0, eps)
        assert truncation_error_bound(m, eps) == pytest.approx(q, rel=1e-8)
    assert truncation_error_bound(0.5, 1e-12) < 1e-5
    with pytest.raises(DomainError):
        truncation_error_bound(1.0, 0.1)


def test_dropped_mass_expectation_matches_bound():
    vals = np.array([dropped_mass_sample(0.5, 50, SeedSpec(4, 0, (r,))) for r in range(4000)])
    ratio = vals[:, 0] / vals[:, 1]
    se = ratio.std(ddof=1) / math.sqrt(ratio.size)
    assert abs(ratio.mean() - 1.0) < 3 * se


def test_window_sampler_count_and_order():
    law = PowerLaw(0.5)
    x = sample_ppp_window(law, 0.01, 0.04, SeedSpec(5))
    assert np.all((x > 0.01) & (x < 0.04))
    assert np.all(np.diff(x) <= 0)


def test_tilted_lebesgue_matches_intensity():
    h = sinusoidal_density(0.5, phase=0.3)
    spec = TiltedLebesgue(0.5, h)
    # expected number of points below y is int_{-inf}^{y} m e^{mz} h(z) dz
    y0 = 2.0
    counts = []
    for r in range(3000):
        y = sample_tilted_lebesgue(spec, 40, SeedSpec(6, 0, (r,)))
        counts.append(int(np.sum(y < y0)))
    mean, _ = integrate.quad(lambda z: 0.5 * math.exp(0.5 * z) * h(z), -60.0, y0, limit=400)
    counts = np.array(counts)
    assert abs(counts.mean() - mean) < 3 * counts.std(ddof=1) / math.sqrt(counts.size)
    # given the count below y0 the law is Poisson
    rep = chi_square_poisson(counts, mean)
    assert rep.passed


def test_tilted_tail_mass_quadrature():
    h = sinusoidal_density(0.5, phase=0.1)
    spec = TiltedLebesgue(0.4, h)
    direct, _ = integrate.quad(lambda y: math.exp(-y) * 0.4 * math.exp(0.4 * y) * h(y), 3.0, 200.0, limit=2000)
    assert tilted_tail_mass(spec, 3.0) == pytest.approx(direct, rel=1e-6)


def test_determinism():
    a = sample_ppp_inverse_mass(PowerLaw(0.3), 100, SeedSpec(8, 3))
    b = sample_ppp_inverse_mass(PowerLaw(0.3), 100, SeedSpec(8, 3))
    assert np.array_equal(a, b)


def test_exp_tilt_gaps_scale():
    # first point of ExpTilt(m) is ln(E_1)/m, a Gumbel-type law
    x = np.array([sample_ppp_inverse_mass(ExpTilt(2.0), 1, SeedSpec(9, 0, (r,)))[0] for r in range(5000)])
    rep = sps.kstest(np.exp(2.0 * x), "expon")
    assert rep.pvalue > 1e-3
