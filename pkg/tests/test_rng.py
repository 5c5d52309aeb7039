import numpy as np
import pytest
from scipy import stats as sps

from kinexch.rng import RngStream, sample_simplex, sample_simplex_batch, split_stream


def test_same_identity_same_sequence():
    a = RngStream(7).split(0)
    b = RngStream(7).split(0)
    assert np.array_equal(a.uniform(1000), b.uniform(1000))


def test_distinct_children_differ():
    a = RngStream(7).split(0)
    b = RngStream(7).split(1)
    assert not np.array_equal(a.uniform(1000), b.uniform(1000))


def test_child_draws_leave_parent_untouched():
    parent = RngStream(3)
    before = RngStream(3).uniform(100)
    child = parent.split(5)
    child.uniform(10_000)
    assert np.array_equal(parent.uniform(100), before)


def test_seed_range_validation():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(2**64)


def test_child_streams_pairwise_uncorrelated():
    root = RngStream(123)
    draws = np.vstack([root.split(i).uniform(10_000) for i in range(100)])
    corr = np.corrcoef(draws)
    off_diag = corr[~np.eye(100, dtype=bool)]
    assert np.abs(off_diag).max() < 0.05


def test_simplex_single_component_is_one():
    assert sample_simplex(RngStream(0), 1).epsilon.tolist() == [1.0]


def test_simplex_rejects_zero_n():
    with pytest.raises(ValueError):
        sample_simplex(RngStream(0), 0)


@pytest.mark.parametrize("n", [2, 3, 7, 50])
@pytest.mark.parametrize("seed", [0, 1, 99])
def test_simplex_sum_and_nonnegativity(n, seed):
    eps = sample_simplex_batch(RngStream(seed), n, 200)
    assert np.all(eps >= 0.0)
    assert np.abs(eps.sum(axis=1) - 1.0).max() <= 1e-12


def test_simplex_two_agent_share_is_uniform():
    eps = sample_simplex_batch(RngStream(42), 2, 20_000)
    d = sps.kstest(eps[:, 0], "uniform").statistic
    assert d < 0.012


def test_simplex_marginals_match_beta():
    # every component of a 4-simplex draw is Beta(1, 3); moderate-size check
    eps = sample_simplex_batch(RngStream(7), 4, 100_000)
    for j in range(4):
        d = sps.kstest(eps[:, j], sps.beta(1, 3).cdf).statistic
        assert d < 0.01


def test_zero_uniform_draws_are_redrawn():
    class ZeroFirstGenerator:
        def __init__(self):
            self.calls = 0
            self.inner = np.random.default_rng(0)

        def random(self, shape=None):
            self.calls += 1
            if self.calls == 1:
                out = self.inner.random(shape)
                out.flat[0] = 0.0
                return out
            if np.isscalar(shape) or shape is None:
                return self.inner.random(shape)
            return self.inner.random(shape)

    stream = RngStream(0)
    stream._gen = ZeroFirstGenerator()
    eps = sample_simplex_batch(stream, 3, 4)
    assert np.all(np.isfinite(eps))
    assert np.abs(eps.sum(axis=1) - 1.0).max() <= 1e-12


def test_split_stream_alias():
    assert split_stream(RngStream(5), 2) == RngStream(5).split(2)
