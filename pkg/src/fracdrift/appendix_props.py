"""Scalar inequalities behind the L^r dissipativity estimates, the
Coulhon-Raynaud extrapolation constant and Nash-iteration bookkeeping."""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import domain_exponents
from .specfun import DomainError, kappa_r_many

__all__ = [
    "INFINITY",
    "Exponent",
    "ExtrapolationInput",
    "lemma_b1_check",
    "lemma_suite",
    "kappa_role_check",
    "extrapolation_constant",
    "nash_constants",
    "b22_b23_verifier",
]

REL_TOL = 1e-12


# ---------------------------------------------------------------- lemma (l1)-(l5)


def _conj_factor(r):
    # 4 / (r r') with r' = r / (r - 1)
    return 4.0 * (r - 1.0) / (r * r)


def lemma_b1_check(s, t, r, b, kappa=None):
    """Evaluate both sides of the five elementary inequalities.

    Inputs broadcast.  Returns a list of (name, lhs, rhs, holds) where
    holds = lhs <= rhs + 1e-12 * scale and scale is the magnitude of the
    largest term entering either side.  ``kappa`` may carry precomputed
    kappa_r(r) values.
    """
    s, t, r, b = np.broadcast_arrays(*(np.asarray(v, float) for v in (s, t, r, b)))
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("s and t must be non-negative")
    if np.any(r < 1):
        raise DomainError("r must be at least 1")
    if np.any(np.abs(b) > 1):
        raise DomainError("b must lie in [-1, 1]")
    if kappa is None:
        kappa = _kappa_values(r)
    kappa = np.broadcast_to(np.asarray(kappa, float), r.shape)

    sr, tr = s**r, t**r
    sh, th = s ** (r / 2), t ** (r / 2)
    s1, t1 = s ** (r - 1), t ** (r - 1)
    cross = s * t1 + t * s1
    geo = (s * t) ** (r / 2)
    c = _conj_factor(r)
    scale = np.maximum.reduce([sr + tr, (s + t) * (s1 + t1), (sh + th) ** 2, np.abs(cross)])
    out = []

    def add(name, lhs, rhs, extra_scale=None):
        sc = scale if extra_scale is None else np.maximum(scale, extra_scale)
        out.append((name, lhs, rhs, lhs <= rhs + REL_TOL * sc))

    mid1 = (s - t) * (s1 - t1)
    add("l1_lower", c * (sh - th) ** 2, mid1)
    add("l1_upper", mid1, (sh - th) ** 2)
    mid2 = (s + t) * (s1 + t1)
    add("l2_lower", (sh + th) ** 2, mid2)
    add("l2_upper", mid2, kappa * (sh + th) ** 2, kappa * scale)
    # written with the full powers s^r + t^r on the left (the form used in
    # the dissipativity proof); b -> -b is immaterial on [-1, 1]
    add("l3", c * (sr + tr + 2 * b * geo), sr + tr + b * cross)
    with np.errstate(divide="ignore", invalid="ignore"):
        pref = np.abs(r - 2) / (2 * np.sqrt(r - 1))
        bracket = sr + tr - np.sqrt(1 - b * b) * cross
        rhs4 = np.where(np.isinf(pref), np.where(bracket > 0, np.inf, 0.0), pref * bracket)
    add("l4", np.abs(b) * np.abs(s * t1 - t * s1), rhs4)
    add("l5", sr + tr + b * cross, kappa * (sr + tr + 2 * b * geo), kappa * scale)
    return out


def _kappa_values(r):
    flat = np.asarray(r, float).ravel()
    uniq, inv = np.unique(flat, return_inverse=True)
    vals = np.empty_like(uniq)
    # r = 1 has r' = inf; the profile 2(1+s)/(1+s^(1/2))^2 has sup 2 as s -> 0
    at_one = uniq == 1.0
    vals[at_one] = 2.0
    if not at_one.all():
        vals[~at_one] = kappa_r_many(uniq[~at_one])
    return vals[inv].reshape(np.shape(r))


def lemma_suite(n=100_000, seed=0, s_max=100.0, r_max=20.0):
    """Random draws s, t in [0, s_max], r in [1, r_max], b in [-1, 1].

    Returns {name: number of violations} plus the draw count.
    """
    rng = np.random.default_rng(seed)
    s = rng.uniform(0, s_max, n)
    t = rng.uniform(0, s_max, n)
    r = rng.uniform(1, r_max, n)
    b = rng.uniform(-1, 1, n)
    res = lemma_b1_check(s, t, r, b, kappa=kappa_r_many(r))
    counts = {name: int(np.sum(~holds)) for name, _, _, holds in res}
    # exact probes: s = t and r = 2
    probe = lemma_b1_check(s[:1000], s[:1000], r[:1000], b[:1000])
    counts["probe_s_eq_t"] = int(sum(np.sum(np.abs(lhs) > 0) for name, lhs, _, _ in probe
                                     if name in ("l1_lower", "l1_upper")))
    at2 = lemma_b1_check(s[:1000], t[:1000], 2.0, b[:1000])
    eq = {name: (lhs, rhs) for name, lhs, rhs, _ in at2}
    rel = lambda a, c: np.abs(a - c) / np.maximum(np.abs(c), 1e-300)
    counts["probe_r2_l1"] = int(np.sum(rel(*eq["l1_lower"]) > 1e-12))
    counts["probe_r2_l3"] = int(np.sum(rel(*eq["l3"]) > 1e-12 * 4))
    counts["probe_r2_l4"] = int(np.sum(eq["l4"][0] != 0))
    return {"n": n, "violations": counts}


def kappa_role_check(n=10_000, seed=1):
    """s^r + t^r - b(s t^(r-1) + t s^(r-1)) <= kappa(r)(s^r + t^r - 2b(st)^(r/2));
    returns the number of violations."""
    rng = np.random.default_rng(seed)
    s, t = rng.uniform(0, 100, n), rng.uniform(0, 100, n)
    r, b = rng.uniform(1, 20, n), rng.uniform(-1, 1, n)
    res = dict((name, holds) for name, _, _, holds in lemma_b1_check(s, t, r, -b))
    return int(np.sum(~res["l5"]))


# ---------------------------------------------------------------- extrapolation


@dataclass(frozen=True)
class Exponent:
    """A Lebesgue exponent in [1, inf]; infinity is a separate variant."""

    value: object = None
    infinite: bool = False

    def __post_init__(self):
        if self.infinite:
            if self.value is not None:
                raise DomainError("the infinite exponent carries no value")
        elif self.value is None or not self.value >= 1:
            raise DomainError("finite exponents must be at least 1")

    @classmethod
    def of(cls, v):
        if isinstance(v, Exponent):
            return v
        return cls(_exact(v))

    def __lt__(self, other):
        if self.infinite:
            return False
        return other.infinite or self.value < other.value

    def __str__(self):
        return "inf" if self.infinite else str(self.value)


INFINITY = Exponent(infinite=True)


def _exact(v):
    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    return v


@dataclass(frozen=True)
class ExtrapolationInput:
    p: Exponent
    q: Exponent
    r: Exponent
    nu: object
    M1: object = 1
    M2: object = 1

    def __post_init__(self):
        for name in ("p", "q", "r"):
            object.__setattr__(self, name, Exponent.of(getattr(self, name)))
        if self.p.infinite or self.q.infinite:
            raise DomainError("only the largest exponent may be infinite")
        if not (self.p < self.q and self.q < self.r):
            raise DomainError("need 1 <= p < q < r <= inf")
        if not self.nu > 0:
            raise DomainError("nu must be positive")
        if not (self.M1 >= 1 and self.M2 >= 1):
            raise DomainError("M1 and M2 must be at least 1")


def interp_exponent(inp):
    p, q = inp.p.value, inp.q.value
    if inp.r.infinite:
        return (q - p) / q
    r = inp.r.value
    return (r / q) * (q - p) / (r - p)


def extrapolation_constant(inp):
    """(interp_exponent, M) with M = 2^(nu/(1-e)^2) M1 M2^(1/(1-e)).

    Exact rational arithmetic is used when every input is an integer or a
    Fraction and the powers come out integral; otherwise floats.
    """
    e = interp_exponent(inp)
    one = 1 - e
    exp2 = _exact(inp.nu) / one**2
    expm2 = 1 / one
    exact = all(isinstance(v, Fraction) for v in (exp2, expm2, _exact(inp.M1), _exact(inp.M2)))
    if exact and exp2.denominator == 1 and expm2.denominator == 1:
        M = Fraction(2) ** int(exp2) * _exact(inp.M1) * _exact(inp.M2) ** int(expm2)
        return e, M
    M = 2.0 ** float(exp2) * float(inp.M1) * float(inp.M2) ** float(expm2)
    return e, M


# ---------------------------------------------------------------- Nash iteration


def _conj(p):
    return p / (p - 1.0)


def nash_constants(params, M, c_S, C_N=1.0, m_max=30):
    """Constants of the Nash-type iteration.

    C = 2 c_S M^(-2/j') / j' and the 1->2 coefficient C^(-j'/2), with
    j' = d/alpha.  The doubling chain uses c1(r) = C_N (alpha/d) 4/(2r)'
    and the r->2r coefficient c1(r)^(-d/(2 alpha r)).  Splitting the time
    as t 2^-(k+1) over the steps r = 2^k telescopes to the 1->2^m
    coefficient returned in ``chain`` for m = 1..m_max; ``limit`` is the
    m -> inf value of the product (its tail is summed in closed form).
    """
    d, a = params.d, params.alpha
    if M <= 0 or c_S <= 0 or C_N <= 0:
        raise DomainError("constants must be positive")
    jp = d / a
    C = 2 * c_S * M ** (-2 / jp) / jp
    one_two = C ** (-jp / 2)

    def c1(r):
        return C_N * (a / d) * 4 / _conj(2 * r)

    # log of the factor contributed by the step 2^k -> 2^(k+1)
    def log_factor(k):
        r = 2.0**k
        return -d / (2 * a * r) * math.log(c1(r)) + (d / a) * (k + 1) * 2.0 ** -(k + 1) * math.log(2)

    logs = np.cumsum([log_factor(k) for k in range(m_max)])
    chain = np.exp(logs)
    # tail beyond 60 steps is below double precision
    limit = math.exp(sum(log_factor(k) for k in range(64)))
    return {
        "j_prime": jp,
        "C": C,
        "one_to_two": one_two,
        "c1": {int(2**k): c1(2.0**k) for k in range(min(m_max, 8))},
        "chain": chain,
        "limit": limit,
        "rel_change_20_30": abs(chain[29] - chain[19]) / chain[29] if m_max >= 30 else math.nan,
    }


# ---------------------------------------------------------------- domain conditions


def b22_b23_verifier(s, params, n_samples=10_000, seed=0, s_values=(0.1, 1.0, 10.0)):
    """Checks used when the weight is bounded below outside a ball.

    Outside the ball of radius s^(1/alpha) the weight is at least 1, so
    psi_s^-theta <= 1; inside, the weighted L^q' norm of psi_s^-theta scales
    as s^((d/alpha)/q'), so the fitted prefactor must not depend on s.
    """
    if s <= 0:
        raise DomainError("s must be positive")
    if params.kappa <= 0:
        raise DomainError("needs kappa > 0")
    d, a = params.d, params.alpha
    theta, qp, norm = domain_exponents(s, params)
    rng = np.random.default_rng(seed)
    rad = s ** (1 / a)
    u = rng.standard_normal((n_samples, d))
    u /= np.linalg.norm(u, axis=1)[:, None]
    pts = u * (rad * (1 + rng.exponential(3.0, n_samples)))[:, None]
    vals = params.weights.psi(s, pts) ** (-theta)
    outside_max = float(vals.max())
    prefactors = []
    for sv in s_values:
        _, _, nv = domain_exponents(sv, params)
        prefactors.append(nv / sv ** ((d / a) / qp))
    pf = np.array(prefactors)
    spread = float((pf.max() - pf.min()) / pf.mean())
    return {
        "theta": theta,
        "q_prime": qp,
        "theta_in_unit_interval": 0 < theta < 1,
        "outside_max": outside_max,
        "c2": 1.0,
        "outside_ok": outside_max <= 1.0 + 1e-12,
        "norm": norm,
        "c3_by_s": dict(zip(map(float, s_values), map(float, pf))),
        "c3_spread": spread,
        "ok": 0 < theta < 1 and outside_max <= 1 + 1e-12 and spread < 1e-8,
    }
