"""Free isotropic stable kernel in R^3 and checks built on it.

The density of the process with generator -(-Delta)^(alpha/2) at time 1 is

    p1(r) = (2 pi^2 r)^-1 int_0^inf exp(-rho^alpha) rho sin(rho r) d rho.

Three evaluation routes are combined:

* a convergent power series for small r,
* Gauss-Legendre panels on the oscillatory integral for moderate r,
* the asymptotic power series in r^-(3 + alpha k) for large r (alpha < 2).

A log-log Hermite table built from these is what the rest of the package
uses; the direct routes stay available for validation.
"""

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .specfun import DomainError, gamma_fn, lgamma_fn, sphere_area

__all__ = [
    "p1_radial",
    "dp1_radial",
    "StableKernelTable",
    "EmpiricalConstant",
    "get_table",
    "envelope",
    "E_kernel",
    "frac_laplacian_const",
    "frac_laplacian_radial",
    "estimate_k0",
    "estimate_k1",
    "convolution_inequality_check",
    "three_p_check",
]

D = 3
_R_SMALL = 0.25
_R_SWITCH = 6.0
_GL16 = np.polynomial.legendre.leggauss(16)


# ---------------------------------------------------------------- small r


def _small_series(r, alpha, deriv=False, tol=1e-17, kmax=400):
    # convergent for alpha > 1 (and r < 2 at alpha = 1); for alpha < 1 it is
    # asymptotic and is cut at its smallest term
    r = np.asarray(r, dtype=float)
    pref = 1.0 / (alpha * 2 ** (D - 1) * math.pi ** (D / 2))
    x = (r / 2) ** 2
    with np.errstate(divide="ignore"):
        log_x = np.log(x)
    total = np.zeros_like(r)
    prev = np.full_like(r, np.inf)
    active = np.ones(r.shape, bool)
    for k in range(kmax):
        if deriv and k == 0:
            continue
        logc = lgamma_fn((2 * k + D) / alpha) - lgamma_fn(k + D / 2) - lgamma_fn(k + 1.0)
        if deriv:
            # d/dr (r/2)^(2k) = k (r/2)^(2k-1)
            log_mag = logc + ((k - 1) * log_x if k > 1 else 0.0) + math.log(k) + np.log(np.maximum(r / 2, 1e-300))
        else:
            log_mag = logc + (k * log_x if k else 0.0)
        if alpha < 1:
            active &= log_mag <= prev
            prev = log_mag
        term = np.where(active, (-1) ** k * np.exp(np.minimum(log_mag, 700.0)), 0.0)
        total = total + term
        if k > 2 and np.all(np.abs(term) <= tol * np.abs(total)):
            break
    if deriv:
        total = np.where(r > 0, total, 0.0)
    return pref * total


# ---------------------------------------------------------------- quadrature


def _panel_nodes(r, alpha):
    rho_max = 40.0 ** (1.0 / alpha)
    graded = [0.0] + [2.0**-k for k in range(30, 0, -1)] + [1.0]
    width = min(0.5, 1.0 / max(r, 1e-12))
    n_uni = max(1, int(math.ceil((rho_max - 1.0) / width)))
    edges = np.concatenate([graded, np.linspace(1.0, rho_max, n_uni + 1)[1:]])
    gx, gw = _GL16
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def _quad_integrals(r, alpha):
    """(int rho e^-rho^a sin(rho r), int rho^2 e^-rho^a cos(rho r)) over rho > 0."""
    rho, w = _panel_nodes(r, alpha)
    damp = np.exp(-(rho**alpha)) * w
    i_sin = float(np.sum(damp * rho * np.sin(rho * r)))
    i_cos = float(np.sum(damp * rho * rho * np.cos(rho * r)))
    return i_sin, i_cos


def _quad_p1(r, alpha):
    i_sin, i_cos = _quad_integrals(r, alpha)
    p = i_sin / (2 * math.pi**2 * r)
    dp = (r * i_cos - i_sin) / (2 * math.pi**2 * r * r)
    return p, dp


# ---------------------------------------------------------------- large r


@lru_cache(maxsize=32)
def _tail_coefficients(alpha, kmax=600):
    """Signed log-magnitudes of the large-r coefficients a_k, k = 1..kmax."""
    ks = np.arange(1, kmax + 1, dtype=float)
    s = np.sin(math.pi * alpha * ks / 2)
    logmag = (
        alpha * ks * math.log(2)
        - (D / 2 + 1) * math.log(math.pi)
        + lgamma_fn((D + alpha * ks) / 2)
        + lgamma_fn(alpha * ks / 2 + 1)
        - lgamma_fn(ks + 1)
    )
    sign = np.where(ks % 2 == 1, 1.0, -1.0)
    return ks, logmag, sign * s


def _tail_series(r, alpha, tol=1e-16):
    """Optimally truncated large-r series.  Returns (p, dp, converged)."""
    ks, logmag, coef = _tail_coefficients(alpha)
    log_r = math.log(r)
    # envelope ignores the sine factor so that the truncation point is robust
    log_env = logmag - (D + alpha * ks) * log_r
    p = dp = 0.0
    best = math.inf
    for k, le, c in zip(ks, log_env, coef):
        if le > best + 1e-12 and k > 3:
            break
        best = min(best, le)
        term = c * math.exp(le)
        p += term
        dp -= (D + alpha * k) / r * term
        if p != 0 and math.exp(le) < tol * abs(p):
            return p, dp, True
    return p, dp, p > 0 and math.exp(best) < 1e-13 * abs(p)


def _use_tail(alpha):
    return alpha < 1.95


# ---------------------------------------------------------------- public pointwise


def _check_alpha(alpha):
    if not 0 < alpha <= 2:
        raise DomainError("alpha must lie in (0, 2]")


def _pointwise(r, alpha):
    _check_alpha(alpha)
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr < 0):
        raise DomainError("radius must be non-negative")
    p = np.empty_like(r_arr)
    dp = np.empty_like(r_arr)
    small = r_arr < (_R_SMALL if alpha >= 1 else 1e-3)
    if np.any(small):
        p[small] = _small_series(r_arr[small], alpha)
        dp[small] = _small_series(r_arr[small], alpha, deriv=True)
    for i in np.flatnonzero(~small):
        ri = float(r_arr[i])
        done = False
        if ri >= _R_SWITCH and _use_tail(alpha):
            pv, dv, ok = _tail_series(ri, alpha)
            if ok:
                p[i], dp[i], done = pv, dv, True
        if not done:
            p[i], dp[i] = _quad_p1(ri, alpha)
    return p, dp


def p1_radial(r, alpha):
    """Unit-time stable density in R^3 as a function of the radius."""
    p, _ = _pointwise(r, alpha)
    return float(p[0]) if np.ndim(r) == 0 else p.reshape(np.shape(r))


def dp1_radial(r, alpha):
    """Radial derivative of :func:`p1_radial` (non-positive)."""
    _, dp = _pointwise(r, alpha)
    return float(dp[0]) if np.ndim(r) == 0 else dp.reshape(np.shape(r))


def p1_at_zero(alpha):
    return gamma_fn(D / alpha) / (2 * math.pi**2 * alpha)


# ---------------------------------------------------------------- table


@dataclass(frozen=True, eq=False)
class StableKernelTable:
    """Log-log Hermite interpolant of p1 with exact node slopes.

    Beyond ``r_max`` the large-r series is summed directly (alpha < 1.95);
    for alpha closer to 2 the density is treated as zero there.  Below
    ``r_min`` the small-r series is summed directly.
    """

    alpha: float
    radii: np.ndarray
    p1_values: np.ndarray
    dp1_values: np.ndarray
    tail_switch_radius: float = _R_SWITCH
    d: int = D
    _spline: object = field(default=None, repr=False)
    _dspline: object = field(default=None, repr=False)
    _cdf: object = field(default=None, repr=False)

    @classmethod
    def build(cls, alpha, n=2048, r_min=1e-4, r_max=1e4):
        _check_alpha(alpha)
        if not _use_tail(alpha):
            r_max = min(r_max, 10.0)
        radii = np.logspace(math.log10(r_min), math.log10(r_max), n)
        p, dp = _pointwise(radii, alpha)
        return cls.from_values(alpha, radii, p, dp)

    @classmethod
    def from_values(cls, alpha, radii, p, dp=None):
        radii = np.asarray(radii, float)
        p = np.asarray(p, float)
        if np.any(p <= 0) or np.any(np.diff(p) >= 0):
            raise DomainError("tabulated density must be positive and decreasing")
        lr, lp = np.log(radii), np.log(p)
        if dp is None:
            dp = CubicSpline(lr, lp)(lr, 1) * p / radii
        dp = np.asarray(dp, float)
        spline = CubicHermiteSpline(lr, lp, radii * dp / p)
        dspline = CubicSpline(lr, np.log(-dp))
        obj = cls(alpha, radii, p, dp)
        object.__setattr__(obj, "_spline", spline)
        object.__setattr__(obj, "_dspline", dspline)
        # radial CDF at the nodes: Hermite data with exact derivative 4 pi r^2 p
        dens = 4 * math.pi * radii**2 * p
        gx, gw = np.polynomial.legendre.leggauss(6)
        a, b = lr[:-1], lr[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        u = mid[:, None] + half[:, None] * gx[None, :]
        pieces = (np.exp(3 * u + spline(u)) * 4 * math.pi * gw[None, :]).sum(1) * half
        head = 4 * math.pi / 3 * radii[0] ** 3 * p1_at_zero(alpha)
        cdf_nodes = head + np.concatenate([[0.0], np.cumsum(pieces)])
        object.__setattr__(obj, "_cdf", CubicHermiteSpline(radii, cdf_nodes, dens))
        return obj

    @property
    def r_min(self):
        return float(self.radii[0])

    @property
    def r_max(self):
        return float(self.radii[-1])

    def _tail_p(self, r):
        out = np.zeros_like(r)
        if _use_tail(self.alpha):
            for i, ri in enumerate(r):
                out[i] = _tail_series(float(ri), self.alpha)[0]
        return out

    def p1(self, r):
        r = np.asarray(r, dtype=float)
        flat = np.atleast_1d(r).ravel()
        out = np.empty_like(flat)
        lo = flat < self.r_min
        hi = flat > self.r_max
        mid = ~(lo | hi)
        if np.any(lo):
            out[lo] = _small_series(flat[lo], self.alpha)
        if np.any(mid):
            out[mid] = np.exp(self._spline(np.log(flat[mid])))
        if np.any(hi):
            out[hi] = self._tail_p(flat[hi])
        return out.reshape(r.shape) if r.ndim else float(out[0])

    def dp1(self, r):
        r = np.asarray(r, dtype=float)
        flat = np.atleast_1d(r).ravel()
        out = np.empty_like(flat)
        lo = flat < self.r_min
        hi = flat > self.r_max
        mid = ~(lo | hi)
        if np.any(lo):
            out[lo] = _small_series(flat[lo], self.alpha, deriv=True)
        if np.any(mid):
            out[mid] = -np.exp(self._dspline(np.log(flat[mid])))
        for i in np.flatnonzero(hi):
            out[i] = _tail_series(float(flat[i]), self.alpha)[1] if _use_tail(self.alpha) else 0.0
        return out.reshape(r.shape) if r.ndim else float(out[0])

    def radial_cdf(self, r):
        """P(|Z_1| <= r)."""
        r = np.asarray(r, dtype=float)
        out = np.where(
            r < self.r_min,
            4 * math.pi / 3 * r**3 * p1_at_zero(self.alpha),
            self._cdf(np.clip(r, self.r_min, self.r_max)),
        )
        if _use_tail(self.alpha):
            beyond = r > self.r_max
            if np.any(beyond):
                out = np.where(beyond, 1.0 - self._tail_mass(r), out)
        return out if out.ndim else float(out)

    def _tail_mass(self, r):
        ks, logmag, coef = _tail_coefficients(self.alpha)
        r = np.atleast_1d(np.asarray(r, float))
        k = ks[:8, None]
        terms = coef[:8, None] * np.exp(logmag[:8, None]) * 4 * math.pi
        return (terms * r[None, :] ** (-self.alpha * k) / (self.alpha * k)).sum(0)

    def normalization(self):
        """Total mass: tabulated part plus the analytic tail beyond r_max."""
        total = float(self._cdf(self.r_max))
        if _use_tail(self.alpha):
            total += float(self._tail_mass(self.r_max)[0])
        return total

    def kernel(self, t, x, y=None):
        """Free kernel t^(-3/alpha) p1(t^(-1/alpha) |x - y|)."""
        if np.any(np.asarray(t) <= 0):
            raise DomainError("t must be positive")
        x = np.asarray(x, dtype=float)
        diff = x if y is None else x - np.asarray(y, dtype=float)
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        return self.kernel_r(t, r)

    def kernel_r(self, t, r):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise DomainError("t must be positive")
        scale = t ** (-1.0 / self.alpha)
        return scale**D * self.p1(np.asarray(r, float) * scale)

    def grad_kernel(self, t, r):
        """|d/dr p_t(r)|; zero at r = 0."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise DomainError("t must be positive")
        scale = t ** (-1.0 / self.alpha)
        return -(scale ** (D + 1)) * self.dp1(np.asarray(r, float) * scale)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["radius", "p1"])
            for r, p in zip(self.radii, self.p1_values):
                w.writerow([repr(float(r)), repr(float(p))])

    @classmethod
    def from_csv(cls, path, alpha):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["radius", "p1"]:
            raise ValueError(f"unexpected header {rows[0]}")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        return cls.from_values(alpha, data[:, 0], data[:, 1])


@lru_cache(maxsize=8)
def get_table(alpha):
    """Shared, immutable table for ``alpha`` (built once per process)."""
    return StableKernelTable.build(float(alpha))


# ---------------------------------------------------------------- envelopes


def envelope(t, r, alpha, d=D):
    t = np.asarray(t, float)
    r = np.asarray(r, float)
    with np.errstate(divide="ignore"):
        return t * np.minimum(r ** (-d - alpha), t ** (-(d + alpha) / alpha))


def E_kernel(t, r, alpha, d=D):
    """Envelope for the gradient of the kernel (one more power of decay)."""
    t = np.asarray(t, float)
    r = np.asarray(r, float)
    with np.errstate(divide="ignore"):
        return t * np.minimum(r ** (-d - alpha - 1), t ** (-(d + alpha + 1) / alpha))


# ---------------------------------------------------------------- empirical constants


@dataclass
class EmpiricalConstant:
    name: str
    value: float
    design: str
    refinement_trend: list
    stderr: float = None
    inconclusive: bool = False

    def as_dict(self):
        return {
            "name": self.name,
            "value": self.value,
            "stderr": self.stderr,
            "design": self.design,
            "refinement_trend": list(self.refinement_trend),
            "inconclusive": self.inconclusive,
        }


def _tr_grid(alpha, n, t_range, u_range):
    ts = np.logspace(*np.log10(t_range), n)
    us = np.concatenate([[0.0], np.logspace(*np.log10(u_range), n - 1)])
    tt, uu = np.meshgrid(ts, us, indexing="ij")
    return tt, uu * tt ** (1 / alpha)


def estimate_k0(alpha, n=100, t_range=(0.1, 10.0), u_range=(1e-3, 1e3), dilation=1.0):
    """Two-sided comparison constant between the kernel and its envelope.

    The ratio is scanned on an n x n grid in (t, r) and on two coarser grids;
    the value is max(sup ratio, 1/inf ratio).
    """
    tab = get_table(alpha)
    trend = []
    for m in (n // 4, n // 2, n):
        tt, rr = _tr_grid(alpha, m, t_range, u_range)
        tt, rr = tt * dilation**alpha, rr * dilation
        ratio = tab.kernel_r(tt, rr) / envelope(tt, rr, alpha)
        trend.append(float(max(ratio.max(), 1 / ratio.min())))
    return EmpiricalConstant(
        "k0", trend[-1], f"{n}x{n} grid t in {t_range}, r/t^(1/alpha) in {u_range}", trend
    )


def estimate_k1(alpha, n=100, t_range=(0.1, 10.0), u_range=(1e-3, 1e3), dilation=1.0):
    """Sup of |grad p_t| / E^t over a (t, r) grid, r > 0."""
    tab = get_table(alpha)
    trend = []
    for m in (n // 4, n // 2, n):
        tt, rr = _tr_grid(alpha, m, t_range, u_range)
        tt, rr = tt[:, 1:] * dilation**alpha, rr[:, 1:] * dilation
        ratio = tab.grad_kernel(tt, rr) / E_kernel(tt, rr, alpha)
        trend.append(float(ratio.max()))
    return EmpiricalConstant(
        "k1", trend[-1], f"{n}x{n} grid t in {t_range}, r/t^(1/alpha) in {u_range}", trend
    )


# ---------------------------------------------------------------- convolution lemmas


def _e_mass_terms(alpha):
    # integral of E^tau over R^3 = area * tau^(-1/alpha) * (1/d + 1/(alpha+1))
    return sphere_area(D) * (1 / D + 1 / (alpha + 1))


def _sample_e_radius(tau, alpha, rng):
    """Radii distributed as r^2 E^tau(r), normalised."""
    n = tau.size
    m_in, m_out = 1 / D, 1 / (alpha + 1)
    inner = rng.random(n) < m_in / (m_in + m_out)
    v = rng.random(n)
    u = np.where(inner, v ** (1 / D), (1 - v) ** (-1 / (alpha + 1)))
    return u * tau ** (1 / alpha)


def _e_density(tau, r, alpha):
    return E_kernel(tau, r, alpha) / (_e_mass_terms(alpha) * tau ** (-1 / alpha))


def _random_directions(n, rng):
    g = rng.standard_normal((n, D))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _sample_tau(t, n, alpha, rng, two_sided):
    comps = 3 if two_sided else 2
    which = rng.integers(0, comps, n)
    v = rng.random(n)
    e = alpha / (alpha - 1)
    tau = np.where(which == 0, v * t, t * v**e)
    if two_sided:
        tau = np.where(which == 2, t - t * v**e, tau)
    # mixture density
    pw = (1 - 1 / alpha) / t
    dens = 1 / t + pw * (tau / t) ** (-1 / alpha)
    if two_sided:
        dens = dens + pw * ((t - tau) / t) ** (-1 / alpha)
    dens = dens / comps
    tau = np.clip(tau, t * 1e-300, t * (1 - 1e-16))
    return tau, dens


def convolution_inequality_check(which, t, x, y, n_mc, alpha, rng):
    """Importance-sampled space-time convolution against its claimed bound.

    which = "ii": int_0^t <p_(t-tau)(x - .) E^tau(. - y)> d tau versus
    t^((alpha-1)/alpha) p_t(x - y).
    which = "iii": int_0^t <E^(t-tau)(x - .) E^tau(. - y)> d tau versus
    t^((alpha-1)/alpha) E^t(x - y).

    Returns a dict with lhs, its standard error, rhs and ratio.
    """
    from .sampler import sample_stable_increment

    if which not in ("ii", "iii"):
        raise ValueError("which must be 'ii' or 'iii'")
    tab = get_table(alpha)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    tau, q_tau = _sample_tau(t, n_mc, alpha, rng, two_sided=(which == "iii"))
    s = t - tau
    from_x = rng.random(n_mc) < 0.5
    z = np.empty((n_mc, D))
    nx = int(from_x.sum())
    if which == "ii":
        z[from_x] = x + sample_stable_increment(D, alpha, s[from_x], nx, rng)
    else:
        z[from_x] = x + _random_directions(nx, rng) * _sample_e_radius(s[from_x], alpha, rng)[:, None]
    ny = n_mc - nx
    z[~from_x] = y + _random_directions(ny, rng) * _sample_e_radius(tau[~from_x], alpha, rng)[:, None]

    rx = np.linalg.norm(z - x, axis=1)
    ry = np.linalg.norm(z - y, axis=1)
    left = tab.kernel_r(s, rx) if which == "ii" else E_kernel(s, rx, alpha)
    right = E_kernel(tau, ry, alpha)
    # proposal densities of z (per unit volume)
    if which == "ii":
        qx = left
    else:
        qx = _e_density(s, rx, alpha)
    qy = _e_density(tau, ry, alpha)
    w = left * right / (q_tau * (0.5 * qx + 0.5 * qy))
    lhs = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(n_mc))
    r_xy = float(np.linalg.norm(x - y))
    base = tab.kernel_r(t, r_xy) if which == "ii" else float(E_kernel(t, r_xy, alpha))
    rhs = t ** ((alpha - 1) / alpha) * base
    return {
        "lhs": lhs,
        "stderr": se,
        "rhs": rhs,
        "ratio": lhs / rhs,
        "ratio_stderr": se / rhs,
        "inconclusive": bool(se > 0.1 * abs(lhs)),
    }


def three_p_check(t, s, x, z, y, alpha):
    """p_t(x-z) p_s(z-y) / [p_(t+s)(x-y) (p_t(x-z) + p_s(z-y))] (vectorised)."""
    tab = get_table(alpha)
    a = tab.kernel(t, x, z)
    b = tab.kernel(s, z, y)
    c = tab.kernel(np.asarray(t) + np.asarray(s), x, y)
    return a * b / (c * (a + b))


# ---------------------------------------------------------------- fractional Laplacian


def frac_laplacian_const(d, alpha):
    """c_{d,alpha} so that c p.v. int (f(x)-f(x+h))|h|^(-d-alpha) dh has symbol |xi|^alpha."""
    return (
        alpha
        * 2 ** (alpha - 1)
        * gamma_fn((d + alpha) / 2)
        / (math.pi ** (d / 2) * gamma_fn(1 - alpha / 2))
    )


def _spherical_mean(f, R, rho, nodes=32):
    """Mean of a radial f over the sphere of radius rho about a point at radius R (d = 3)."""
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    lo = np.abs(R - rho)
    hi = R + rho
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    s = mid[:, None] + half[:, None] * gx[None, :]
    integral = (f(s) * s * gw[None, :]).sum(1) * half
    return integral / (2 * R * rho)


def frac_laplacian_radial(f, R, alpha, cutoff_factor=1e4, inner_factor=1e-3):
    """(-Delta)^(alpha/2) f at a point with |x| = R, for radial f in R^3.

    ``f`` maps an array of radii to values.  The hypersingular integral is
    reduced to a one-dimensional integral over the distance rho using
    spherical means.  For rho below inner_factor*R the second-order Taylor
    term is integrated analytically.  Beyond cutoff_factor*R the mean is
    extrapolated with the power law fitted at the cutoff.
    """
    if R <= 0:
        raise DomainError("evaluation point must be away from the origin")
    c = frac_laplacian_const(D, alpha)
    fR = float(f(np.array([R]))[0])

    # inner region: f(R) - M(rho) ~ -lap f(R) rho^2 / 6
    h = 1e-4 * R
    fm, f0, fp = f(np.array([R - h, R, R + h]))
    lap = (fp - 2 * f0 + fm) / h**2 + 2 / R * (fp - fm) / (2 * h)
    rho0 = inner_factor * R
    inner = -lap / 6 * 4 * math.pi * rho0 ** (2 - alpha) / (2 - alpha)

    cut = cutoff_factor * R
    edges = np.unique(
        np.concatenate([np.geomspace(rho0, R, 24), np.geomspace(R, cut, 40)])
    )
    gx, gw = np.polynomial.legendre.leggauss(20)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * (edges[1:] - edges[:-1])
    rho = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    wts = (half[:, None] * gw[None, :]).ravel()
    diff = fR - _spherical_mean(f, R, rho)
    body = float(np.sum(diff * 4 * math.pi * rho ** (-1 - alpha) * wts))

    m1, m2 = _spherical_mean(f, R, np.array([cut, cut * 1.01]))
    if m1 > 0 and m2 > 0:
        slope = math.log(m2 / m1) / math.log(1.01)
        if slope >= alpha:
            raise DomainError("f grows too fast for the integral to converge")
        tail_mean = m1 * cut ** (-alpha) / (alpha - slope)
    else:
        tail_mean = 0.0
    tail = 4 * math.pi * (fR * cut ** (-alpha) / alpha - tail_mean)
    return c * (inner + body + tail)
