import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracdrift.specfun import (
    DomainError,
    gamma_constant,
    gamma_fn,
    kappa_r,
    kappa_r_many,
    lgamma_fn,
    sphere_area,
)

# mpmath, 30 digits
GAMMA_ORACLE = {
    0.1: 9.5135076986687312858,
    0.5: 1.7724538509055160273,
    1.5: 0.88622692545275801365,
    2.5: 1.3293403881791370205,
    7.25: 1155.3810139199896872,
    20.0: 121645100408832000.0,
    -0.5: -3.5449077018110320546,
    -2.5: -0.94530872048294188123,
}


@pytest.mark.parametrize("x,expected", sorted(GAMMA_ORACLE.items()))
def test_gamma_against_mpmath(x, expected):
    assert gamma_fn(x) == pytest.approx(expected, rel=1e-13)
    assert gamma_fn(np.array([x]))[0] == pytest.approx(expected, rel=1e-13)


def test_gamma_poles():
    with pytest.raises(DomainError):
        gamma_fn(0.0)
    with pytest.raises(DomainError):
        gamma_fn(np.array([1.0, -2.0]))


def test_lgamma_large_argument():
    assert lgamma_fn(200.0) == pytest.approx(math.lgamma(200.0), rel=1e-14)
    with pytest.raises(DomainError):
        lgamma_fn(-1.0)


def test_gamma_constant_oracle():
    assert gamma_constant(4, 1.5) == pytest.approx(37.740482714723755276, rel=1e-14)
    assert gamma_constant(3, 1) == pytest.approx(19.739208802178717238, rel=1e-14)
    with pytest.raises(DomainError):
        gamma_constant(3, 3)


def test_sphere_area():
    assert sphere_area(3) == pytest.approx(4 * math.pi, rel=1e-14)
    assert sphere_area(2) == pytest.approx(2 * math.pi, rel=1e-14)


@pytest.mark.parametrize("r,expected", [
    (1.5, 1.0515668461264171763),
    (3.0, 1.0515668461264171763),
    (4.0, 1.125),
    (8.0, 1.3433771182108292089),
])
def test_kappa_r_oracle(r, expected):
    assert kappa_r(r) == pytest.approx(expected, rel=1e-12)


def test_kappa_r_two_is_one():
    assert abs(kappa_r(2) - 1.0) <= 1e-12
    assert kappa_r_many(np.array([2.0]))[0] == 1.0


def test_kappa_r_many_matches_scalar():
    rs = np.array([1.1, 1.7, 2.5, 6.0, 19.0])
    assert np.allclose(kappa_r_many(rs), [kappa_r(r) for r in rs], rtol=1e-12, atol=0)


@given(st.floats(1.01, 30.0))
def test_kappa_r_conjugate_symmetry(r):
    rp = r / (r - 1)
    assert kappa_r(r) == pytest.approx(kappa_r(rp), rel=1e-10)
    assert kappa_r(r) >= 1.0


@given(st.floats(0.05, 25.0))
def test_gamma_recurrence(x):
    assert gamma_fn(x + 1) == pytest.approx(x * gamma_fn(x), rel=1e-12)
