"""Model parameters, the critical exponent and the weight family.

The drift is b(x) = kappa |x|^-alpha x, mollified as
b_eps(x) = kappa (|x|^2 + eps)^(-alpha/2) x.  The exponent ``beta`` is the
unique root in (0, alpha) of

    beta (d+beta-2) / (d+beta-alpha) * g(d+beta-2) / g(d+beta-alpha) = kappa,

with g the Riesz constant from :func:`fracdrift.specfun.gamma_constant`.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .specfun import DomainError, gamma_constant, sphere_area

__all__ = [
    "ConfigError",
    "SingularityError",
    "ModelParams",
    "WeightFamily",
    "kappa_of_beta",
    "solve_beta",
    "drift",
    "drift_eps",
    "div_drift_eps",
    "lyapunov_potential",
    "residual_potential",
    "bump_curvature",
    "domain_exponents",
    "time_avg_weight_check",
]


class ConfigError(ValueError):
    """Invalid model or experiment configuration."""


class SingularityError(ValueError):
    """Unmollified field evaluated at the origin."""


def kappa_of_beta(beta, d=3, alpha=1.5):
    """Drift strength kappa that produces exponent ``beta``."""
    if not 0 < beta < alpha:
        raise DomainError("beta must lie in (0, alpha)")
    ratio = gamma_constant(d, d + beta - 2) / gamma_constant(d, d + beta - alpha)
    return beta * (d + beta - 2) / (d + beta - alpha) * ratio


def solve_beta(kappa, d=3, alpha=1.5, max_iter=400):
    """Invert :func:`kappa_of_beta` by bisection on [1e-12, alpha - 1e-12].

    Stops when |kappa(beta) - kappa| <= 1e-11 kappa or when the
    bracket cannot shrink any further in floating point.
    """
    if kappa <= 0:
        raise DomainError("solve_beta needs kappa > 0")
    lo, hi = 1e-12, alpha - 1e-12
    f_lo = kappa_of_beta(lo, d, alpha) - kappa
    f_hi = kappa_of_beta(hi, d, alpha) - kappa
    if f_lo > 0 or f_hi < 0:
        raise DomainError(f"kappa={kappa} is outside the attainable range")
    tol = 1e-11 * kappa
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        f_mid = kappa_of_beta(mid, d, alpha) - kappa
        if abs(f_mid) <= tol:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    if abs(kappa_of_beta(mid, d, alpha) - kappa) > tol:
        raise DomainError(f"bisection did not reach tolerance for kappa={kappa}")
    return mid


@dataclass(frozen=True)
class ModelParams:
    d: int = 3
    alpha: float = 1.5
    kappa: float = 1.0
    eps: float = 0.0
    beta: float = field(init=False)

    def __post_init__(self):
        if self.d < 2:
            raise ConfigError("dimension must be at least 2")
        if not 1 < self.alpha < 2:
            raise ConfigError("alpha must lie in (1, 2)")
        if self.kappa < 0:
            raise ConfigError("kappa must be non-negative")
        if self.eps < 0:
            raise ConfigError("eps must be non-negative")
        # kappa = 0 is the free stable process; its weight is identically 1
        beta = 0.0 if self.kappa == 0 else solve_beta(self.kappa, self.d, self.alpha)
        object.__setattr__(self, "beta", beta)

    def with_eps(self, eps):
        return ModelParams(self.d, self.alpha, self.kappa, eps)

    @property
    def weights(self):
        return WeightFamily(self.beta, self.alpha)


def _norm(x):
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.sum(x * x, axis=-1))


def drift(x, params):
    """Unmollified drift kappa |x|^-alpha x; raises at the origin."""
    x = np.asarray(x, dtype=float)
    r = _norm(x)
    if np.any(r == 0):
        raise SingularityError("drift is singular at the origin")
    return params.kappa * (r ** -params.alpha)[..., None] * x


def drift_eps(x, params, eps=None):
    eps = params.eps if eps is None else eps
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1) + eps
    if np.any(r2 == 0):
        raise SingularityError("eps = 0 and x at the origin")
    return params.kappa * (r2 ** (-params.alpha / 2))[..., None] * x


def div_drift_eps(x, params, eps=None):
    """Divergence of the mollified drift; non-negative since alpha < d."""
    eps = params.eps if eps is None else eps
    d, a, k = params.d, params.alpha, params.kappa
    x = np.asarray(x, dtype=float)
    q = np.sum(x * x, axis=-1)
    r2 = q + eps
    return k * (d * r2 ** (-a / 2) - a * r2 ** (-a / 2 - 1) * q)


def lyapunov_potential(x, params, eps=None):
    """kappa (d+beta-alpha) (|x|^-alpha - |x|_eps^-alpha), the potential left
    over when the mollified operator acts on |x|^beta."""
    eps = params.eps if eps is None else eps
    d, a, k, b = params.d, params.alpha, params.kappa, params.beta
    r = _norm(x)
    if np.any(r == 0):
        raise SingularityError("potential is singular at the origin")
    return k * (d + b - a) * (r**-a - (r * r + eps) ** (-a / 2))


def residual_potential(x, params, eps=None):
    """Potential remaining after the mollified adjoint acts on |x|^beta.

    It is the sum of the drift-strength defect and the divergence defect
    of the mollified field; both vanish as eps -> 0.
    """
    eps = params.eps if eps is None else eps
    d, a, k, b = params.d, params.alpha, params.kappa, params.beta
    x = np.asarray(x, dtype=float)
    q = np.sum(x * x, axis=-1)
    if np.any(q == 0):
        raise SingularityError("potential is singular at the origin")
    r_a = q ** (-a / 2)
    re_a = (q + eps) ** (-a / 2)
    div_defect = d * re_a - a * (q + eps) ** (-a / 2 - 1) * q - (d - a) * r_a
    return k * (re_a - r_a) * b + k * div_defect


def bump_curvature(r, beta, d=3):
    """Radial profile that must stay non-negative on 1 < r < 2.

    Laplacian of (power weight - bounded weight) in the transition shell,
    with the factor beta r^-2 kept in front.
    """
    r = np.asarray(r, dtype=float)
    return beta * r**-2.0 * ((d + beta - 2) * r**beta + 1 - (d - 1) * (2 - r) * r)


@dataclass(frozen=True)
class WeightFamily:
    """Bounded weights built from a profile that is |u|^beta near 0 and
    constant 1 + beta/2 beyond radius 2, with a quadratic C^1 splice."""

    beta: float
    alpha: float

    def eta(self, t):
        b = self.beta
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("eta is defined for t >= 0")
        mid = b * t * (2 - t / 2) + 1 - 1.5 * b
        out = np.where(t < 1, np.power(t, b), np.where(t <= 2, mid, 1 + b / 2))
        return out if out.ndim else float(out)

    def eta_prime(self, t):
        b = self.beta
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            low = b * np.power(t, b - 1)
        out = np.where(t < 1, low, np.where(t <= 2, b * (2 - t), 0.0))
        return out if out.ndim else float(out)

    def eta0(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t < 1, np.power(t, self.beta), 1.0)
        return out if out.ndim else float(out)

    def _scaled(self, s, x, radial):
        if s <= 0:
            raise DomainError("time scale must be positive")
        r = np.abs(np.asarray(x, float)) if radial else _norm(x)
        return r * s ** (-1 / self.alpha)

    def psi(self, s, x, radial=False):
        """Bounded weight at time scale s; pass radial=True for radii."""
        return self.eta(self._scaled(s, x, radial))

    def psi0(self, s, x, radial=False):
        return self.eta0(self._scaled(s, x, radial))

    def psi_power(self, s, x, radial=False):
        """Unbounded power weight s^(-beta/alpha) |x|^beta."""
        return np.power(self._scaled(s, x, radial), self.beta)


def domain_exponents(s, params):
    """Interpolation exponents and the weighted L^q' norm of psi_s^-theta
    over the ball of radius s^(1/alpha).

    Returns (theta, q_prime, weighted_norm).  The norm is computed by
    radial quadrature; its closed form c s^((d/alpha)/q') is used only in
    tests.
    """
    d, a, b = params.d, params.alpha, params.beta
    if b <= 0:
        raise ConfigError("needs kappa > 0")
    theta = (2 - a) * d / ((2 - a) * d + 8 * b)
    qp = 2 / (1 - theta)
    w = params.weights
    rad = s ** (1 / a)

    def integrand(r):
        return sphere_area(d) * r ** (d - 1) * w.psi(s, r, radial=True) ** (-theta * qp)

    val, _ = integrate.quad(integrand, 0.0, rad, epsabs=0.0, epsrel=1e-12, limit=200)
    return theta, qp, val ** (1 / qp)


def time_avg_weight_check(h, t, weights, points=None, volumes=None, n_tau=4000):
    """Compare the time average of ||psi0_tau h||_1 over (0, t] with
    ((2 alpha - beta)/(alpha - beta)) ||psi0_t h||_1.

    ``h`` holds non-negative values at ``points`` (shape (n, d)) with cell
    volumes ``volumes``.  Alternatively ``points`` may be a 1-D array of
    radii with ``volumes`` the matching shell volumes.  Returns (lhs, rhs).
    """
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise DomainError("h must be non-negative")
    pts = np.asarray(points, dtype=float)
    vol = np.asarray(volumes, dtype=float)
    radial = pts.ndim == 1
    r = np.abs(pts) if radial else _norm(pts)
    mass = h * vol

    # Gauss-Legendre panels in tau, graded towards 0
    edges = t * np.linspace(0.0, 1.0, n_tau // 4 + 1) ** 2
    gx, gw = np.polynomial.legendre.leggauss(4)
    mids = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    taus = (mids[:, None] + half[:, None] * gx[None, :]).ravel()
    tw = (half[:, None] * gw[None, :]).ravel()

    lhs = 0.0
    for tau_chunk, w_chunk in zip(np.array_split(taus, 40), np.array_split(tw, 40)):
        u = r[None, :] * tau_chunk[:, None] ** (-1 / weights.alpha)
        norms = np.where(u < 1, u**weights.beta, 1.0) @ mass
        lhs += float(norms @ w_chunk)
    lhs /= t
    a, b = weights.alpha, weights.beta
    rhs = (2 * a - b) / (a - b) * float(weights.psi0(t, r, radial=True) @ mass)
    return lhs, rhs
