import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinning.seeding import SeedSpec, as_generator, as_seedspec
from thinning.stats import ks_two_sample_permutation


@given(st.integers(0, 2**64 - 1), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_same_spec_same_stream(master, stream):
    a = SeedSpec(master, stream).generator().random(5)
    b = SeedSpec(master, stream).generator().random(5)
    assert np.array_equal(a, b)


def test_child_paths_compose():
    s = SeedSpec(3, 1)
    assert s.child(2, 5) == s.child(2).child(5)
    assert not np.array_equal(s.child(1).generator().random(4), s.child(2).generator().random(4))


def test_rejects_out_of_range():
    with pytest.raises(ValueError):
        SeedSpec(-1)
    with pytest.raises(ValueError):
        SeedSpec(2**64)
    with pytest.raises(ValueError):
        SeedSpec(1, -2)


def test_distinct_streams_look_independent():
    # pairs (x_i, y_i) from two streams vs pairs with y shuffled: no detectable dependence
    x = SeedSpec(9, 0).generator().random(4000)
    y = SeedSpec(9, 1).generator().random(4000)
    prod = x * y
    shuffled = x * SeedSpec(9, 2).generator().permutation(y)
    rep = ks_two_sample_permutation(prod, shuffled, 999, 1)
    assert rep.passed
    assert abs(np.corrcoef(x, y)[0, 1]) < 4 / np.sqrt(x.size)


def test_coercions():
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    assert as_seedspec(5) == SeedSpec(5)
    with pytest.raises(TypeError):
        as_generator("seed")
    assert SeedSpec(4, 2, (1,)).to_record() == {"master_seed": 4, "stream_index": 2, "path": [1]}
