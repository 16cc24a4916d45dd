"""Sampling isotropic stable increments as Gaussians with a stable variance.

A one-sided stable variable S of index a = alpha/2 (Laplace transform
exp(-lambda^a)) is drawn with Kanter's representation; then
sqrt(2 S) G, G standard normal, has characteristic function exp(-|xi|^alpha).
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .specfun import DomainError

__all__ = ["RngStream", "stream_id_for", "sample_one_sided_stable", "sample_stable_increment"]


def stream_id_for(*labels):
    """Stable 64-bit id derived from a tuple of labels."""
    text = "|".join(repr(x) for x in labels).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream keyed by (seed, stream_id)."""

    seed: int
    stream_id: int

    def __post_init__(self):
        for v in (self.seed, self.stream_id):
            if not 0 <= v < 2**64:
                raise ValueError("seed and stream_id must be unsigned 64-bit integers")

    def generator(self):
        return np.random.Generator(np.random.Philox(key=self.seed + (self.stream_id << 64)))

    def child(self, *labels):
        return RngStream(self.seed, stream_id_for(self.stream_id, *labels))


def _log_kanter(u, a):
    pu = math.pi * u
    return (
        a / (1 - a) * np.log(np.sin(a * pu))
        + np.log(np.sin((1 - a) * pu))
        - np.log(np.sin(pu)) / (1 - a)
    )


def _log_one_sided(a, n, rng):
    u = rng.random(n)
    # Generator.random can return exactly 0; the construction needs (0, 1)
    u = np.where(u == 0.0, 0.5 / 2**53, u)
    e = rng.standard_exponential(n)
    return (1 - a) / a * (_log_kanter(u, a) - np.log(e))


def sample_one_sided_stable(a, n, rng):
    """Positive stable samples with E exp(-lambda S) = exp(-lambda^a)."""
    if not 0 < a < 1:
        raise DomainError("index must lie in (0, 1)")
    return np.exp(_log_one_sided(a, n, rng))


def sample_stable_increment(d, alpha, dt, n, rng):
    """n increments over time dt (scalar or per-sample array), shape (n, d)."""
    if not 0 < alpha < 2:
        raise DomainError("alpha must lie in (0, 2)")
    dt = np.asarray(dt, dtype=float)
    if np.any(dt <= 0):
        raise DomainError("dt must be positive")
    log_s = _log_one_sided(alpha / 2, n, rng) + (2 / alpha) * np.log(dt)
    g = rng.standard_normal((n, d))
    g *= np.exp(0.5 * (log_s + math.log(2.0)))[:, None]
    return g
