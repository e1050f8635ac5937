import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from thinning.errors import InsufficientData
from thinning.seeding import SeedSpec
from thinning.stats import (
    INCONCLUSIVE,
    PASS,
    REJECT,
    EmpiricalSample,
    Functional,
    TestReport,
    bonferroni,
    chi_square_poisson,
    invariance_suite,
    ks_statistic,
    ks_two_sample_permutation,
    poisson_cells,
    proportion_difference_test,
)


def _brute_ks(a, b):
    grid = np.concatenate((a, b))
    fa = np.array([np.mean(a <= g) for g in grid])
    fb = np.array([np.mean(b <= g) for g in grid])
    return float(np.max(np.abs(fa - fb)))


def test_identical_samples():
    a = np.arange(12.0)
    rep = ks_two_sample_permutation(a, a.copy(), 999, 1)
    assert rep.statistic == 0.0 and rep.p_value == 1.0 and rep.decision == PASS


def test_disjoint_supports():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(0, 1, 20), rng.uniform(2, 3, 20)
    rep = ks_two_sample_permutation(a, b, 999, 2, stop_after=None, level=0.01)
    assert rep.statistic == 1.0
    assert rep.p_value == pytest.approx(1 / 1000)
    assert rep.decision == REJECT


def test_exhaustive_enumeration_oracle():
    a, b = np.array([1.0, 2.0]), np.array([1.5, 2.5])
    pooled = np.concatenate((a, b))
    obs = _brute_ks(a, b)
    splits = list(itertools.combinations(range(4), 2))
    assert len(splits) == 6
    hits = sum(_brute_ks(pooled[list(s)], np.delete(pooled, list(s))) >= obs - 1e-12 for s in splits)
    rep = ks_two_sample_permutation(a, b, 999, 0, min_size=1)
    assert rep.metadata["method"] == "exhaustive" and rep.metadata["splits"] == 6
    assert rep.statistic == pytest.approx(obs)
    assert rep.p_value == pytest.approx(hits / 6)
    assert rep.p_value == 1.0


def test_exhaustive_matches_brute_force_on_ties():
    a = np.array([0.0, 1.0, 1.0, 3.0])
    b = np.array([1.0, 2.0, 2.0, 4.0, 5.0])
    pooled = np.concatenate((a, b))
    obs = _brute_ks(a, b)
    hits, total = 0, 0
    for s in itertools.combinations(range(9), 4):
        hits += _brute_ks(pooled[list(s)], np.delete(pooled, list(s))) >= obs - 1e-12
        total += 1
    rep = ks_two_sample_permutation(a, b, 999, 0, exhaustive=True, min_size=1)
    assert rep.p_value == pytest.approx(hits / total)


@given(
    st.lists(st.integers(-5, 5), min_size=1, max_size=25),
    st.lists(st.integers(-5, 5), min_size=1, max_size=25),
)
@settings(max_examples=60, deadline=None)
def test_statistic_matches_brute_force(a, b):
    a, b = np.array(a, float), np.array(b, float)
    assert ks_statistic(a, b) == pytest.approx(_brute_ks(a, b))
    assert ks_statistic(a, b) == pytest.approx(ks_statistic(b, a))
    assert 0.0 <= ks_statistic(a, b) <= 1.0


def test_deterministic_given_seed():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=60), rng.normal(0.2, size=70)
    r1 = ks_two_sample_permutation(a, b, 2000, SeedSpec(3))
    r2 = ks_two_sample_permutation(a, b, 2000, SeedSpec(3))
    assert r1.to_json() == r2.to_json()


def test_small_samples_inconclusive():
    rep = ks_two_sample_permutation([1.0, 2.0, 3.0], [4.0, 5.0], 999, 0)
    assert rep.decision == INCONCLUSIVE


def test_permutation_pvalues_are_valid_under_null():
    # meta-simulation: P(p <= alpha) <= alpha up to Monte Carlo error
    ps = []
    for r in range(400):
        rng = SeedSpec(7, 0, (r,)).generator()
        ps.append(ks_two_sample_permutation(rng.normal(size=30), rng.normal(size=30), 999, SeedSpec(7, 1, (r,))).p_value)
    ps = np.array(ps)
    for alpha in (0.05, 0.1, 0.25):
        assert np.mean(ps <= alpha) <= alpha + 3 * math.sqrt(alpha * (1 - alpha) / ps.size)


def test_chi_square_calibration():
    ps = []
    for r in range(400):
        counts = SeedSpec(8, 0, (r,)).generator().poisson(3.0, size=200)
        ps.append(chi_square_poisson(counts, 3.0).p_value)
    assert sps.kstest(ps, "uniform").pvalue > 1e-3


def test_chi_square_controls():
    assert chi_square_poisson(np.full(500, 3), 3.0).decision == REJECT
    with pytest.raises(InsufficientData):
        chi_square_poisson([2], 2.0)


def test_pooled_cells_conserve_totals():
    counts = SeedSpec(9).generator().poisson(0.7, size=300)
    o, e = poisson_cells(counts, 0.7)
    assert o.sum() == 300 and e.sum() == pytest.approx(300)
    assert e.min() >= 5


def test_bonferroni_combination():
    reps = [TestReport("a", 0, 0.02, 10, 10, PASS), TestReport("b", 0, 0.3, 10, 10, PASS)]
    out = bonferroni(reps, 0.05, "both")
    assert out.p_value == pytest.approx(0.04) and out.decision == REJECT
    assert bonferroni(reps, 0.01, "both").decision == PASS


def test_report_serialization_is_stable():
    rep = TestReport("x", 0.5, 0.25, 3, 4, PASS, SeedSpec(1).to_record(), {"b": np.float64(1.5), "a": np.arange(2)})
    assert rep.to_json() == rep.to_json()
    assert '"a": [0, 1]' in rep.to_json()


def test_empirical_sample_validation():
    with pytest.raises(ValueError):
        EmpiricalSample(np.array([]))
    with pytest.raises(ValueError):
        EmpiricalSample(np.array([1.0, np.nan]))


def test_invariance_suite_identity_transform():
    src = lambda s: s.generator().normal()
    res = invariance_suite(src, lambda x, p, s: x, [Functional("x", float)], [0.5, 0.9], reps=500, seed=3)
    assert res.passed and len(res) == 2
    assert res.corrected_level == pytest.approx(0.001 / 2)


def test_invariance_suite_detects_shift():
    src = lambda s: s.generator().normal()
    res = invariance_suite(src, lambda x, p, s: x + 0.5, [Functional("x", float)], [0.5], reps=500, seed=3)
    assert res.rejected


def test_invariance_suite_independent_of_workers():
    src = lambda s: s.generator().exponential()
    tr = lambda x, p, s: x * (1 + 0.01 * s.generator().random())
    a = invariance_suite(src, tr, [Functional("x", float)], [0.3], reps=500, seed=4, workers=1)
    b = invariance_suite(src, tr, [Functional("x", float)], [0.3], reps=500, seed=4, workers=4)
    assert [r.to_json() for r in a] == [r.to_json() for r in b]


def test_invariance_suite_minimum_reps():
    with pytest.raises(ValueError):
        invariance_suite(lambda s: 0.0, lambda x, p, s: x, [Functional("x", float)], [0.5], reps=100)


def test_paired_proportions():
    rng = np.random.default_rng(1)
    x = rng.random(5000) < 0.5
    assert proportion_difference_test(x, rng.random(5000) < 0.5).decision == PASS
    assert proportion_difference_test(x, x & (rng.random(5000) < 0.8)).decision == REJECT
    assert proportion_difference_test(x[:100], x[:100]).decision == INCONCLUSIVE
