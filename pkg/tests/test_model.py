import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracdrift.model import (
    ConfigError,
    ModelParams,
    SingularityError,
    WeightFamily,
    bump_curvature,
    div_drift_eps,
    domain_exponents,
    drift,
    drift_eps,
    kappa_of_beta,
    lyapunov_potential,
    residual_potential,
    solve_beta,
    time_avg_weight_check,
)
from fracdrift.specfun import DomainError, sphere_area

# mpmath root of the balance equation, 30 digits
BETA_ORACLE = {
    1e-3: 0.0011966134841797864491,
    1.0: 0.87560368434157107581,
    5.0: 1.3883627423391059662,
    10.0: 1.4470990071602191047,
    1e3: 1.4995010178152325667,
}


@pytest.mark.parametrize("kappa,beta", sorted(BETA_ORACLE.items()))
def test_solve_beta_oracle(kappa, beta):
    assert solve_beta(kappa) == pytest.approx(beta, rel=1e-9)


@given(st.floats(1e-3, 1e3))
def test_round_trip(kappa):
    b = solve_beta(kappa)
    assert 0 < b < 1.5
    assert abs(kappa_of_beta(b) - kappa) / kappa <= 1e-8


@given(st.floats(1e-3, 1e3), st.floats(1.001, 2.0))
def test_beta_increasing(kappa, factor):
    assert solve_beta(kappa * factor) > solve_beta(kappa)


def test_solve_beta_domain():
    with pytest.raises(DomainError):
        solve_beta(0.0)
    with pytest.raises(DomainError):
        kappa_of_beta(1.5)


def test_params_validation():
    with pytest.raises(ConfigError):
        ModelParams(alpha=2.0)
    with pytest.raises(ConfigError):
        ModelParams(kappa=-1.0)
    assert ModelParams(kappa=0.0).beta == 0.0
    p = ModelParams(kappa=5.0).with_eps(0.1)
    assert p.eps == 0.1 and p.beta == pytest.approx(BETA_ORACLE[5.0], rel=1e-9)


def test_drift_singular_and_mollified():
    p = ModelParams(kappa=2.0, eps=0.0)
    with pytest.raises(SingularityError):
        drift(np.zeros(3), p)
    with pytest.raises(SingularityError):
        drift_eps(np.zeros(3), p)
    x = np.array([0.3, -0.4, 0.0])
    assert np.allclose(drift(x, p), drift_eps(x, p))
    assert np.allclose(drift_eps(np.zeros(3), p.with_eps(0.1)), 0.0)


@given(st.floats(0.01, 5.0), st.floats(1e-4, 1.0))
def test_divergence_matches_finite_difference(r, eps):
    p = ModelParams(kappa=3.0, eps=eps)
    x = np.array([r, 0.3 * r, -0.2 * r])
    h = 1e-6 * max(r, 1e-2)
    fd = sum(
        (drift_eps(x + h * e, p)[i] - drift_eps(x - h * e, p)[i]) / (2 * h)
        for i, e in enumerate(np.eye(3))
    )
    assert div_drift_eps(x, p) == pytest.approx(fd, rel=1e-5)
    assert div_drift_eps(x, p) >= 0


def test_potentials_vanish_without_mollifier():
    p = ModelParams(kappa=5.0, eps=0.0)
    x = np.array([[0.5, 0, 0], [0, 2.0, 0]])
    assert np.allclose(lyapunov_potential(x, p), 0.0)
    assert np.allclose(residual_potential(x, p), 0.0)
    assert np.all(lyapunov_potential(x, p.with_eps(0.01)) > 0)


def test_bump_curvature_nonnegative():
    for kappa in (0.1, 1.0, 5.0, 100.0):
        b = solve_beta(kappa)
        r = np.linspace(1.0 + 1e-9, 2.0, 400)
        assert np.all(bump_curvature(r, b) >= 0)


def test_weight_exactness():
    b = solve_beta(5.0)
    w = WeightFamily(b, 1.5)
    assert w.eta(1.0) == 1.0
    assert w.eta(2.0) == 1 + b / 2
    h = 1e-7
    left = (w.eta(1.0) - w.eta(1.0 - h)) / h
    right = (w.eta(1.0 + h) - w.eta(1.0)) / h
    assert abs(left - right) <= 1e-6
    assert w.eta_prime(1.0) == pytest.approx(b, rel=1e-12)
    with pytest.raises(DomainError):
        w.eta(-1.0)


@given(st.floats(0.01, 5.0), st.floats(1.0, 50.0), st.floats(0.0, 20.0))
def test_weight_time_monotonicity(t, ratio, radius):
    # s >= t
    b = solve_beta(5.0)
    w = WeightFamily(b, 1.5)
    s = t * ratio
    x = np.array([radius, 0.0, 0.0])
    ps, pt = w.psi(s, x), w.psi(t, x)
    assert (t / s) ** (b / 1.5) * pt <= ps * (1 + 1e-12)
    assert ps <= pt * (1 + 1e-12)


def test_domain_exponents_scaling():
    p = ModelParams(kappa=5.0)
    theta, qp, n1 = domain_exponents(1.0, p)
    assert theta == pytest.approx(0.11898244368815425, rel=1e-12)
    assert qp == pytest.approx(2 / (1 - theta), rel=1e-14)
    _, _, n10 = domain_exponents(10.0, p)
    assert n10 / n1 == pytest.approx(10 ** (2.0 / qp), rel=1e-9)
    # closed form on the ball: |S^2| int_0^1 r^(2 - beta theta q') dr
    closed = (sphere_area(3) / (3 - p.beta * theta * qp)) ** (1 / qp)
    assert n1 == pytest.approx(closed, rel=1e-10)


def test_time_avg_weight_check_shells():
    p = ModelParams(kappa=5.0)
    w = p.weights
    r = np.linspace(0.01, 6.0, 600)
    vol = 4 * np.pi * r**2 * (r[1] - r[0])
    h = np.exp(-r)
    lhs, rhs = time_avg_weight_check(h, 1.0, w, r, vol)
    assert 0 < lhs <= rhs
    with pytest.raises(DomainError):
        time_avg_weight_check(-h, 1.0, w, r, vol)
