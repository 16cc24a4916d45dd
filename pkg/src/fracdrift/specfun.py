"""Special functions and small constants shared across the package.

Gamma is evaluated with a fixed-coefficient Lanczos approximation
(g = 7, nine coefficients) so that the package does not depend on a
particular libm for its headline constants.
"""

import math

import numpy as np

__all__ = [
    "DomainError",
    "gamma_fn",
    "lgamma_fn",
    "gamma_constant",
    "sphere_area",
    "kappa_r",
    "kappa_r_many",
]


class DomainError(ValueError):
    """Argument outside the domain of a function."""


_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _lanczos_series(z):
    # z = x - 1 for x >= 0.5
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for k, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc = acc + c / (z + k)
    return acc


def _check_poles(x):
    if np.any((x <= 0) & (x == np.round(x))):
        raise DomainError("Gamma has poles at non-positive integers")


def _gamma_scalar(x):
    if x <= 0 and x == round(x):
        raise DomainError("Gamma has poles at non-positive integers")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * _gamma_scalar(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for k in range(1, 9):
        acc += _LANCZOS_COEF[k] / (z + k)
    t = z + _LANCZOS_G + 0.5
    return _SQRT_2PI * t ** (z + 0.5) * math.exp(-t) * acc


def gamma_fn(x):
    """Gamma function for real arguments (scalar or array).

    Relative error is below 1e-13 on (0, 30]; reflection is used for
    x < 1/2.
    """
    if isinstance(x, (int, float)):
        return _gamma_scalar(float(x))
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    _check_poles(x)
    out = np.empty_like(x)

    right = x >= 0.5
    if np.any(right):
        z = x[right] - 1.0
        t = z + _LANCZOS_G + 0.5
        out[right] = _SQRT_2PI * np.power(t, z + 0.5) * np.exp(-t) * _lanczos_series(z)
    left = ~right
    if np.any(left):
        xl = x[left]
        out[left] = math.pi / (np.sin(math.pi * xl) * gamma_fn(1.0 - xl))
    return float(out) if scalar else out


def lgamma_fn(x):
    """log Gamma(x) for x > 0, usable far beyond the overflow point of Gamma."""
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("lgamma_fn is defined here for x > 0 only")
    out = np.empty_like(x)
    small = x < 0.5
    if np.any(small):
        out[small] = np.log(gamma_fn(x[small]))
    big = ~small
    if np.any(big):
        z = x[big] - 1.0
        t = z + _LANCZOS_G + 0.5
        out[big] = (
            math.log(_SQRT_2PI) + (z + 0.5) * np.log(t) - t + np.log(_lanczos_series(z))
        )
    return float(out) if scalar else out


def gamma_constant(d, a):
    """Riesz-potential constant 2^a pi^(d/2) Gamma(a/2) / Gamma((d-a)/2), 0 < a < d."""
    if not 0 < a < d:
        raise DomainError(f"gamma_constant needs 0 < a < d, got a={a}, d={d}")
    return 2.0**a * math.pi ** (d / 2.0) * gamma_fn(a / 2.0) / gamma_fn((d - a) / 2.0)


def sphere_area(d):
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / gamma_fn(d / 2.0)


def _kappa_profile(u, r):
    # u = log s, s in (0, 1); returns (1+s^(1/r))(1+s^(1/r'))/(1+s^(1/2))^2
    rp = r / (r - 1.0)
    return (1.0 + np.exp(u / r)) * (1.0 + np.exp(u / rp)) / (1.0 + np.exp(0.5 * u)) ** 2


_U_LO = -700.0
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, lo, hi, tol):
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while np.max(np.abs(b - a)) > tol:
        left = fc > fd
        # where the max is left of d, shrink [a, b] -> [a, d]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _INVPHI * (b - a)
        new_d = a + _INVPHI * (b - a)
        fc_next = np.where(left, f(new_c), fd)
        fd_next = np.where(left, fc, f(new_d))
        c, d, fc, fd = new_c, new_d, fc_next, fd_next
    return np.maximum(fc, fd)


def kappa_r(r, n_grid=10_000, tol=1e-10):
    """sup over s in (0,1) of (1+s^(1/r))(1+s^(1/r'))(1+s^(1/2))^-2, r' = r/(r-1).

    A log-spaced scan of ``n_grid`` points brackets the maximiser, then
    golden-section search refines it to an interval of width ``tol`` in log s.
    """
    if not r > 1:
        raise DomainError("kappa_r needs r > 1")
    if r == 2:
        return 1.0
    return float(kappa_r_many(np.array([float(r)]), n_grid=n_grid, tol=tol)[0])


def kappa_r_many(r, n_grid=256, tol=1e-10, chunk=4096):
    """Vectorised kappa_r over an array of exponents (coarser default scan)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r <= 1):
        raise DomainError("kappa_r needs r > 1")
    out = np.empty_like(r)
    u = np.linspace(_U_LO, 0.0, n_grid + 1)[:-1]
    du = u[1] - u[0]
    for start in range(0, r.size, chunk):
        rc = r[start : start + chunk]
        vals = _kappa_profile(u[None, :], rc[:, None])
        i = np.argmax(vals, axis=1)
        lo = np.maximum(u[i] - du, _U_LO)
        hi = np.minimum(u[i] + du, 0.0)
        best = _golden_max(lambda v: _kappa_profile(v, rc), lo, hi, tol)
        out[start : start + chunk] = np.maximum(np.maximum(best, vals.max(axis=1)), 1.0)
    out[r == 2] = 1.0
    return out
