import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from fracdrift.sampler import (
    RngStream,
    sample_one_sided_stable,
    sample_stable_increment,
    stream_id_for,
)
from fracdrift.specfun import DomainError
from fracdrift.stable_kernel import get_table


def ecf_check(samples, xi):
    """Real and imaginary parts of the empirical characteristic function
    at xi, with their standard errors."""
    phase = samples @ xi
    c, s = np.cos(phase), np.sin(phase)
    n = len(samples)
    return c.mean(), s.mean(), c.std() / math.sqrt(n), s.std() / math.sqrt(n)


@pytest.mark.parametrize("a", [0.3, 0.5, 0.75, 0.95])
def test_one_sided_laplace_transform(a):
    rng = np.random.default_rng(11)
    s = sample_one_sided_stable(a, 200_000, rng)
    assert np.all(s > 0) and np.all(np.isfinite(s))
    for lam in (0.5, 1.0, 2.0):
        v = np.exp(-lam * s)
        se = v.std() / math.sqrt(len(v))
        assert abs(v.mean() - math.exp(-lam**a)) <= 4 * se


def test_half_index_closed_form():
    # a = 1/2 is the Levy distribution with scale 1/2
    rng = np.random.default_rng(12)
    s = sample_one_sided_stable(0.5, 50_000, rng)
    p = stats.kstest(s, stats.levy(scale=0.5).cdf).pvalue
    assert p > 0.001


def test_increment_characteristic_function():
    rng = np.random.default_rng(13)
    z = sample_stable_increment(3, 1.5, 1.0, 200_000, rng)
    for k in (0.3, 0.7, 1.0, 1.5, 2.2):
        xi = k * np.array([0.48, -0.6, 0.64])
        re, im, se_re, se_im = ecf_check(z, xi)
        assert abs(re - math.exp(-k**1.5)) <= 4 * se_re
        assert abs(im) <= 4 * se_im


def test_increment_time_scaling():
    rng = np.random.default_rng(14)
    z = sample_stable_increment(3, 1.5, 0.25, 100_000, rng)
    xi = np.array([1.0, 0.0, 0.0])
    re, _, se, _ = ecf_check(z, xi)
    assert abs(re - math.exp(-0.25)) <= 4 * se


def test_radial_histogram_chi_square():
    rng = np.random.default_rng(15)
    r = np.linalg.norm(sample_stable_increment(3, 1.5, 1.0, 100_000, rng), axis=1)
    tab = get_table(1.5)
    edges = np.concatenate([[0.0], np.geomspace(0.2, 20, 30), [np.inf]])
    cdf = np.concatenate([[0.0], tab.radial_cdf(edges[1:-1]), [1.0]])
    expected = np.diff(cdf) * len(r)
    observed = np.histogram(r, edges)[0]
    assert stats.chisquare(observed, expected).pvalue > 0.001


def test_stream_reproducible_and_distinct():
    a = RngStream(7, stream_id_for("x", 1)).generator().random(5)
    b = RngStream(7, stream_id_for("x", 1)).generator().random(5)
    c = RngStream(7, stream_id_for("x", 2)).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@given(st.integers(0, 2**63), st.text(max_size=8))
def test_child_streams_are_deterministic(seed, label):
    root = RngStream(seed, 1)
    assert root.child(label) == root.child(label)
    assert 0 <= root.child(label).stream_id < 2**64


def test_domain_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(DomainError):
        sample_one_sided_stable(1.0, 3, rng)
    with pytest.raises(DomainError):
        sample_stable_increment(3, 2.0, 1.0, 3, rng)
    with pytest.raises(DomainError):
        sample_stable_increment(3, 1.5, 0.0, 3, rng)
    with pytest.raises(ValueError):
        RngStream(-1, 0)
