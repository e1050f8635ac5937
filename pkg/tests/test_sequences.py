import math

import numpy as np
import pytest

from thinning.errors import InsufficientLength, ShortfallAfterThinning
from thinning.gaps import required_length
from thinning.seeding import SeedSpec
from thinning.sequences import (
    MarkedSequence,
    MarkSpace,
    exchangeability_probe,
    iid_categorical,
    iid_uniform,
    parity_field,
    sample_cox_marks,
    sample_cox_sequence,
    semigroup_pair,
    thin_sequence,
)
from thinning.stats import INCONCLUSIVE, PASS, REJECT, Functional, invariance_suite, ks_two_sample_permutation


def test_mark_space_validation():
    with pytest.raises(ValueError):
        MarkSpace.categorical(1)
    with pytest.raises(ValueError):
        MarkedSequence(np.array([0, 3]), MarkSpace.categorical(3))
    with pytest.raises(ValueError):
        MarkedSequence(np.array([]))


def test_thin_with_fixed_marks():
    u = MarkedSequence(np.arange(5), MarkSpace.categorical(5))  # a..e
    keep = np.array([False, True, True, False, True])  # indices 2, 3, 5 (1-based)
    assert np.array_equal(thin_sequence(u, 0.5, 3, keep=keep).marks, [1, 2, 4])
    with pytest.raises(ShortfallAfterThinning):
        thin_sequence(u, 0.5, 4, keep=keep)


def test_identity_and_guard():
    u = sample_cox_sequence(iid_categorical((0.3, 0.7)), 50, 1)
    assert thin_sequence(u, 1.0, 50) == u
    with pytest.raises(InsufficientLength):
        thin_sequence(u, 0.5, 40, 2)


def test_iid_bits_are_fair():
    u = sample_cox_marks(iid_categorical((0.5, 0.5)), 1000, 100, SeedSpec(3))
    freq = u.mean()
    assert abs(freq - 0.5) < 3 * math.sqrt(0.25 / u.size)


def test_periodic_field_marginal_is_half():
    u = sample_cox_marks(parity_field(1.0), 5, 40_000, SeedSpec(4))
    for j in range(5):
        assert abs(u[:, j].mean() - 0.5) < 3 * math.sqrt(0.25 / u.shape[0])


def test_iid_uniform_thinned_marginals():
    n_out, p = 4, 0.5
    length = required_length(n_out, p)
    a, b = [], []
    for r in range(2000):
        a.append(sample_cox_sequence(iid_uniform(), n_out, SeedSpec(5, 0, (r,))).marks)
        u = sample_cox_sequence(iid_uniform(), length, SeedSpec(5, 1, (r,)))
        b.append(thin_sequence(u, p, n_out, SeedSpec(5, 2, (r,))).marks)
    a, b = np.array(a), np.array(b)
    for j in range(n_out):
        assert ks_two_sample_permutation(a[:, j], b[:, j], 999, SeedSpec(5, 3, (j,))).decision == PASS


def test_semigroup_law():
    spec = parity_field(1.0)
    n_out, p, q = 4, 0.5, 0.6
    length = required_length(required_length(n_out, p), q)
    code = lambda u: float(np.dot(u.marks, 2 ** np.arange(n_out)))
    two, one = [], []
    for r in range(2000):
        u = sample_cox_sequence(spec, length, SeedSpec(6, 0, (r,)))
        two.append(code(semigroup_pair(u, p, q, n_out, SeedSpec(6, 1, (r,)))))
        v = sample_cox_sequence(spec, length, SeedSpec(6, 2, (r,)))
        one.append(code(thin_sequence(v, p * q, n_out, SeedSpec(6, 3, (r,)))))
    assert ks_two_sample_permutation(two, one, 999, 7).decision == PASS


def test_periodic_field_invariance_small_suite():
    spec = parity_field(1.0)
    length = required_length(3, 0.5)
    f = [Functional("U2", lambda u: float(u.marks[1])), Functional("code", lambda u: float(u.marks[0] + 2 * u.marks[1] + 4 * u.marks[2]))]
    res = invariance_suite(lambda s: sample_cox_sequence(spec, length, s), lambda u, p, s: thin_sequence(u, p, 3, s), f, [0.5], 1000, seed=8)
    assert res.passed


def test_probe_outcomes():
    assert exchangeability_probe(iid_categorical(), 200_000, 9).decision == PASS
    rep = exchangeability_probe(parity_field(1.0), 200_000, 10)
    assert rep.decision == REJECT
    assert rep.metadata["q12"] > rep.metadata["q13"]
    assert exchangeability_probe(parity_field(1.0), 100, 11).decision == INCONCLUSIVE


def test_probe_needs_categorical_marks():
    with pytest.raises(ValueError):
        exchangeability_probe(iid_uniform(), 2000, 1)
