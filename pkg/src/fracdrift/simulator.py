"""Monte Carlo and PDE backends for the drifted stable semigroup.

Monte Carlo
    Euler scheme for dX = b_eps(X) dt + dL_t with a substep that keeps the
    deterministic displacement below a fraction of |X|_eps.  Kernel values
    are estimated by a Gaussian kernel density estimate with a bandwidth that
    follows the free-kernel envelope.  Near the origin, where forward paths
    almost never land, the adjoint estimator is used instead: a population
    started at y moves with the reversed drift, carries the killing weight
    exp(-int div b_eps), and is resampled whenever its effective size
    drops.  Its density at x estimates the kernel at (x, y).

PDE
    Strang splitting on a periodic box: upwind finite-volume transport
    (conservative for the density equation, its exact transpose for the
    backward equation) around a spectral fractional-diffusion step.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .model import ConfigError, ModelParams
from .sampler import RngStream, sample_stable_increment, stream_id_for
from .stable_kernel import envelope, get_table

__all__ = [
    "SimConfig",
    "KernelField",
    "Endpoints",
    "SimulationError",
    "default_threads",
    "euler_paths",
    "estimate_kernel",
    "Population",
    "killed_population",
    "estimate_kernel_adjoint",
    "killed_moments",
    "Grid3D",
    "propagate",
    "gaussian_bump",
    "free_convolution_periodic",
    "contraction_and_ultracontractivity_check",
    "write_snapshot",
    "read_snapshot",
]

THREADS_ENV = "FRACDRIFT_THREADS"
BLOCK = 1 << 15
INCONCLUSIVE_REL = 0.25


class SimulationError(RuntimeError):
    """A run produced too many non-finite paths."""


def default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    t_final: float
    n_paths: int = 100_000
    dt: float = None
    eps_schedule: tuple = ()
    grid: tuple = (16.0, 64)
    seed: int = 0
    c_cfl: float = 0.25
    threads: int = None

    def __post_init__(self):
        if self.t_final <= 0:
            raise ConfigError("t_final must be positive")
        if self.dt is None:
            object.__setattr__(self, "dt", min(0.01, self.t_final / 100))
        if self.dt <= 0 or self.t_final < self.dt:
            raise ConfigError("need 0 < dt <= t_final")
        if self.params.kappa > 0 and self.params.eps <= 0:
            raise ConfigError("eps must be positive: the singular drift is never stepped")
        if any(e <= 0 for e in self.eps_schedule):
            raise ConfigError("eps_schedule entries must be positive")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be positive")
        if not 0 < self.c_cfl < 1:
            raise ConfigError("c_cfl must lie in (0, 1)")

    @property
    def n_threads(self):
        return self.threads or default_threads()

    def with_(self, **kw):
        return replace(self, **kw)


# ---------------------------------------------------------------- Monte Carlo


@dataclass
class Endpoints:
    points: np.ndarray
    weights: np.ndarray = None
    n_flagged: int = 0

    @property
    def n(self):
        return self.points.shape[0]


def _advance(X, t, T, cfg, rng, reverse=False, w=None, w_floor=0.0, roulette=0.0):
    """Move every path in X from its time t up to T (in place).

    Weights below ``w_floor`` are set to zero.  Weights below ``roulette``
    play Russian roulette instead: they survive with probability
    w / roulette and are then raised to ``roulette``, which keeps every
    weighted mean unbiased.  Returns a boolean mask of paths that became
    non-finite.
    """
    p = cfg.params
    a, k, eps, d = p.alpha, p.kappa, p.eps, p.d
    sign = -1.0 if reverse else 1.0
    idx = np.flatnonzero(t < T * (1 - 1e-12))
    if w is not None:
        idx = idx[w[idx] > 0]
    flagged = np.zeros(X.shape[0], dtype=bool)
    end = T * (1 - 1e-12)
    while idx.size:
        Xa = X[idx]
        h = np.minimum(cfg.dt, T - t[idx])
        if k > 0:
            q = np.einsum("ij,ij->i", Xa, Xa)
            re = q + eps
            fac = k * re ** (-a / 2)
            speed = fac * np.sqrt(q)
            with np.errstate(divide="ignore"):
                h = np.minimum(h, cfg.c_cfl * np.sqrt(re) / speed)
            if w is not None:
                div = k * (d * re ** (-a / 2) - a * re ** (-a / 2 - 1) * q)
                w[idx] *= np.exp(-h * div)
            Xa = Xa + (sign * fac * h)[:, None] * Xa
        Xa = Xa + sample_stable_increment(d, a, h, idx.size, rng)
        X[idx] = Xa
        t[idx] += h
        bad = ~np.all(np.isfinite(Xa), axis=1)
        done = (t[idx] >= end) | bad
        if bad.any():
            flagged[idx[bad]] = True
        if w is not None:
            wi = w[idx]
            if roulette > 0:
                low = np.flatnonzero(wi < roulette)
                if low.size:
                    keep = rng.random(low.size) * roulette < wi[low]
                    wi[low] = np.where(keep, roulette, 0.0)
                    w[idx[low]] = wi[low]
            dead = (wi < w_floor) | (wi == 0)
            w[idx[dead]] = 0.0
            done |= dead
        idx = idx[~done]
    if w is not None:
        w[flagged] = 0.0
    X[flagged] = np.nan
    return flagged


def _block(x0, n, T, cfg, rng, reverse, weighted, w_floor):
    X = np.tile(np.asarray(x0, float), (n, 1))
    t = np.zeros(n)
    w = np.ones(n) if weighted else None
    flagged = _advance(X, t, T, cfg, rng, reverse, w, w_floor)
    return X, w, int(flagged.sum())


def euler_paths(x0, config, label="fwd", t_final=None, reverse=False, weighted=False,
                n_paths=None, w_floor=1e-14):
    """Endpoints of n_paths Euler paths started at x0.

    reverse=True flips the drift; weighted=True accumulates the killing
    weight exp(-int div b_eps) along the path.  Paths are split into fixed
    blocks whose random streams depend only on (seed, label, x0, block),
    so the result does not depend on the number of worker threads.
    """
    T = config.t_final if t_final is None else t_final
    n = config.n_paths if n_paths is None else n_paths
    x0 = np.asarray(x0, float)
    starts = list(range(0, n, BLOCK))
    key = (label, tuple(np.round(x0, 15)), float(T), float(config.params.eps), reverse)

    def run(i):
        m = min(BLOCK, n - starts[i])
        rng = RngStream(config.seed, stream_id_for(*key, i)).generator()
        return _block(x0, m, T, config, rng, reverse, weighted, w_floor)

    if config.n_threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(config.n_threads) as ex:
            parts = list(ex.map(run, range(len(starts))))
    else:
        parts = [run(i) for i in range(len(starts))]
    pts = np.concatenate([p[0] for p in parts])
    w = np.concatenate([p[1] for p in parts]) if weighted else None
    flagged = sum(p[2] for p in parts)
    if flagged > 1e-4 * n:
        raise SimulationError(f"{flagged} of {n} paths became non-finite")
    return Endpoints(pts, w, flagged)


@dataclass
class KernelField:
    """Kernel estimates at design points (t, x, y)."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    backend: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.atleast_1d(np.asarray(self.t, float))
        self.x = np.atleast_2d(np.asarray(self.x, float))
        self.y = np.atleast_2d(np.asarray(self.y, float))
        self.estimate = np.asarray(self.estimate, float)
        self.stderr = np.asarray(self.stderr, float)
        if np.any(self.estimate < 0):
            raise ValueError("kernel estimates must be non-negative")
        if not np.all(np.isfinite(self.stderr)):
            raise ValueError("stderr must be finite")

    def __len__(self):
        return self.estimate.size

    @property
    def rel_err(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.estimate > 0, self.stderr / self.estimate, np.inf)

    @property
    def inconclusive(self):
        return self.rel_err > INCONCLUSIVE_REL

    @classmethod
    def concat(cls, fields, backend=None):
        return cls(
            np.concatenate([f.t for f in fields]),
            np.concatenate([f.x for f in fields]),
            np.concatenate([f.y for f in fields]),
            np.concatenate([f.estimate for f in fields]),
            np.concatenate([f.stderr for f in fields]),
            backend or "+".join(sorted({f.backend for f in fields})),
            {"parts": [f.meta for f in fields]},
        )

    def subset(self, mask):
        return KernelField(self.t[mask], self.x[mask], self.y[mask],
                           self.estimate[mask], self.stderr[mask], self.backend, self.meta)

    def to_csv(self, path):
        cols = ["t", "x1", "x2", "x3", "y1", "y2", "y3", "estimate", "stderr", "backend"]
        lines = [",".join(cols)]
        for i in range(len(self)):
            vals = [self.t[i], *self.x[i], *self.y[i], self.estimate[i], self.stderr[i]]
            lines.append(",".join(repr(float(v)) for v in vals) + f",{self.backend}")
        _atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path):
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
        data = np.atleast_1d(data)
        backend = str(data["backend"][0]) if data.size else "MC"
        xs = np.column_stack([data["x1"], data["x2"], data["x3"]])
        ys = np.column_stack([data["y1"], data["y2"], data["y3"]])
        return cls(data["t"], xs, ys, data["estimate"], data["stderr"], backend)


def _atomic_write_text(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _bandwidth(t, dist, n, alpha, d=3, c_bw=0.5):
    # envelope pilot made dimensionless in the natural length t^(1/alpha)
    scale = t ** (1 / alpha)
    pilot = envelope(t, dist, alpha, d) * t ** (d / alpha)
    return c_bw * scale * (pilot * n) ** (-1 / (d + 4))


def _kde(points, y, h):
    """Per-path Gaussian kernel contributions at y with bandwidth h."""
    d = points.shape[1]
    diff = points - y
    q = np.einsum("ij,ij->i", diff, diff)
    return np.exp(-0.5 * q / (h * h)) / (2 * math.pi * h * h) ** (d / 2)


def estimate_kernel(x0, ys, config, endpoints=None, c_bw=0.5):
    """Forward-path kernel density estimate of e^{-t Lambda}(x0, y) at each y."""
    if config.n_paths < 10_000:
        raise ConfigError("estimate_kernel needs at least 1e4 paths")
    ep = endpoints if endpoints is not None else euler_paths(x0, config)
    pts = ep.points[np.all(np.isfinite(ep.points), axis=1)]
    n = ep.n
    ys = np.atleast_2d(np.asarray(ys, float))
    x0 = np.asarray(x0, float)
    t = config.t_final
    est = np.empty(len(ys))
    se = np.empty(len(ys))
    hs = np.empty(len(ys))
    for i, y in enumerate(ys):
        h = float(_bandwidth(t, np.linalg.norm(y - x0), n, config.params.alpha, c_bw=c_bw))
        c = _kde(pts, y, h)
        # flagged paths count as zero contributions
        est[i] = c.sum() / n
        se[i] = math.sqrt(max((c * c).sum() / n - est[i] ** 2, 0.0) / (n - 1))
        hs[i] = h
    return KernelField(
        np.full(len(ys), t), np.tile(x0, (len(ys), 1)), ys, est, se, "MC",
        {"bandwidth": hs.tolist(), "n_paths": n, "eps": config.params.eps, "seed": config.seed},
    )


# ---------------------------------------------------------------- adjoint estimator


@dataclass
class Population:
    """Weighted particles for the reversed-drift, killed process.

    Integrals int e^{-t Lambda}(z, y) f(z) dz are estimated by
    mass * mean(f(points)) within each replica; replicas are independent.
    """

    points: list
    mass: np.ndarray
    n_flagged: int = 0

    def moments(self, fn):
        """(mean, stderr) over replicas of mass * mean f(points)."""
        vals = np.array([m * float(np.mean(fn(pts))) for pts, m in zip(self.points, self.mass)])
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))

    def density_at(self, x, h):
        x = np.asarray(x, float)
        vals = np.array([m * float(np.mean(_kde(pts, x, h)))
                         for pts, m in zip(self.points, self.mass)])
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def _systematic_resample(w, rng):
    n = w.size
    c = np.cumsum(w)
    c /= c[-1]
    pos = (rng.random() + np.arange(n)) / n
    return np.minimum(np.searchsorted(c, pos), n - 1)


def killed_population(y, config, n_particles=None, replicas=20, t_final=None,
                      label="adjoint", ess_fraction=0.5, roulette=0.02):
    """Sequential Monte Carlo for the weighted law of reversed-drift paths.

    Particles start at y, move with drift -b_eps and carry the killing weight
    exp(-int div b_eps).  After each base step the population is resampled
    when its effective size falls below ess_fraction; the running product of
    mean weights keeps the mass estimate unbiased.
    """
    T = config.t_final if t_final is None else t_final
    n = (n_particles or config.n_paths) // replicas
    if n < 100:
        raise ConfigError("too few particles per replica")
    y = np.asarray(y, float)
    epochs = max(1, int(math.ceil(T / config.dt - 1e-9)))
    times = np.linspace(0.0, T, epochs + 1)[1:]
    # a start near the origin loses most weight long before the first base
    # step ends, so the first step is split geometrically from the time the
    # drift needs to cross |y|
    k = config.params.kappa
    if k > 0:
        r = max(float(np.linalg.norm(y)), math.sqrt(config.params.eps))
        t0 = 0.05 * r**config.params.alpha / k
        if t0 < times[0]:
            early = np.geomspace(t0, times[0], 16)[:-1]
            times = np.concatenate([early, times])
    key = (label, tuple(np.round(y, 15)), float(T), float(config.params.eps))

    def run(r):
        rng = RngStream(config.seed, stream_id_for(*key, r)).generator()
        X = np.tile(y, (n, 1))
        t = np.zeros(n)
        w = np.ones(n)
        log_mass = 0.0
        flagged = 0
        for T_k in times:
            flagged += int(_advance(X, t, T_k, config, rng, True, w, 0.0, roulette).sum())
            mean_w = w.mean()
            if mean_w == 0:
                return X, -math.inf, flagged
            ess = w.sum() ** 2 / (w * w).sum()
            if ess < ess_fraction * n:
                idx = _systematic_resample(w, rng)
                X = X[idx]
                log_mass += math.log(mean_w)
                w = np.ones(n)
            t[:] = T_k
        log_mass += math.log(w.mean())
        # fold residual weights into the particles by one final resampling
        idx = _systematic_resample(w, rng)
        return X[idx], log_mass, flagged

    if config.n_threads > 1:
        with ThreadPoolExecutor(config.n_threads) as ex:
            parts = list(ex.map(run, range(replicas)))
    else:
        parts = [run(r) for r in range(replicas)]
    total_flagged = sum(p[2] for p in parts)
    if total_flagged > 1e-4 * n * replicas:
        raise SimulationError(f"{total_flagged} particles became non-finite")
    pts = [p[0][np.all(np.isfinite(p[0]), axis=1)] for p in parts]
    mass = np.exp([p[1] for p in parts])
    return Population(pts, mass, total_flagged)


def estimate_kernel_adjoint(xs, y, config, population=None, c_bw=0.5, **kw):
    """e^{-t Lambda}(x, y) at several x for one (typically near-origin) y.

    The function z -> e^{-t Lambda}(z, y) is the weighted density of the
    reversed-drift killed population started at y; it is read off at each
    x with a Gaussian kernel whose width follows the free-kernel envelope.
    """
    pop = population or killed_population(y, config, **kw)
    xs = np.atleast_2d(np.asarray(xs, float))
    y = np.asarray(y, float)
    t = config.t_final
    n_eff = sum(p.shape[0] for p in pop.points)
    est, se, hs = [], [], []
    for x in xs:
        h = float(_bandwidth(t, np.linalg.norm(x - y), n_eff, config.params.alpha, c_bw=c_bw))
        m, s = pop.density_at(x, h)
        est.append(m)
        se.append(s)
        hs.append(h)
    return KernelField(
        np.full(len(xs), t), xs, np.tile(y, (len(xs), 1)), est, se, "MC-adjoint",
        {"bandwidth": hs, "n_particles": n_eff, "replicas": len(pop.points),
         "eps": config.params.eps, "seed": config.seed},
    )


def killed_moments(x0, config, funcs, **kw):
    """int e^{-t Lambda}(z, x0) f(z) dz for each named f, as (mean, stderr)."""
    pop = killed_population(x0, config, **kw)
    return {name: pop.moments(fn) for name, fn in funcs.items()}


# ---------------------------------------------------------------- PDE


def _allowed_n(n):
    while n % 2 == 0:
        n //= 2
    while n % 3 == 0:
        n //= 3
    return n == 1


@dataclass(frozen=True)
class Grid3D:
    """Cell-centred periodic grid on [-L/2, L/2]^3."""

    L: float
    N: int

    def __post_init__(self):
        if not (self.N >= 8 and _allowed_n(self.N)):
            raise ConfigError("grid points per axis must be of the form 2^a 3^b, at least 8")
        if self.L <= 0:
            raise ConfigError("box size must be positive")

    @property
    def dx(self):
        return self.L / self.N

    @property
    def axis(self):
        return -self.L / 2 + (np.arange(self.N) + 0.5) * self.dx

    def mesh(self):
        a = self.axis
        return np.meshgrid(a, a, a, indexing="ij")

    def points(self):
        X, Y, Z = self.mesh()
        return np.stack([X, Y, Z], axis=-1)

    def radius(self):
        X, Y, Z = self.mesh()
        return np.sqrt(X * X + Y * Y + Z * Z)

    @property
    def cell_volume(self):
        return self.dx**3

    def integral(self, f):
        return float(f.sum() * self.cell_volume)

    def symbol(self, alpha, kind="lattice"):
        k = 2 * math.pi * np.fft.fftfreq(self.N, d=self.dx)
        kr = 2 * math.pi * np.fft.rfftfreq(self.N, d=self.dx)
        if kind == "lattice":
            s1 = (2 / self.dx * np.sin(k * self.dx / 2)) ** 2
            sr = (2 / self.dx * np.sin(kr * self.dx / 2)) ** 2
        elif kind == "exact":
            s1, sr = k * k, kr * kr
        else:
            raise ConfigError(f"unknown symbol {kind!r}")
        q = s1[:, None, None] + s1[None, :, None] + sr[None, None, :]
        return q ** (alpha / 2)


def gaussian_bump(grid, center=(0.0, 0.0, 0.0), width=1.0, mass=1.0):
    c = np.asarray(center, float)
    X, Y, Z = grid.mesh()
    q = (X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2
    f = np.exp(-0.5 * q / width**2)
    return f * mass / grid.integral(f)


def _face_velocity(grid, params):
    """Normal drift component on the +1/2 face of each cell along each axis."""
    a = grid.axis
    out = []
    for ax in range(3):
        coords = list(np.meshgrid(a, a, a, indexing="ij"))
        coords[ax] = coords[ax] + grid.dx / 2
        q = coords[0] ** 2 + coords[1] ** 2 + coords[2] ** 2 + params.eps
        out.append(params.kappa * q ** (-params.alpha / 2) * coords[ax])
    return out


def _fv_step(m, vel, lam):
    """Upwind conservative step m -> m - lam * (flux differences)."""
    out = m.copy()
    for ax, v in enumerate(vel):
        up = np.roll(m, -1, axis=ax)
        flux = np.maximum(v, 0) * m + np.minimum(v, 0) * up
        out -= lam * (flux - np.roll(flux, 1, axis=ax))
    return out


def _fv_step_transpose(u, vel, lam):
    """Exact transpose of :func:`_fv_step` (upwind step for u_t = b.grad u)."""
    out = u.copy()
    for ax, v in enumerate(vel):
        vp, vm = np.maximum(v, 0), np.minimum(v, 0)
        du = np.roll(u, -1, axis=ax) - u
        # cell j sees its own +face with b+ and its -face with b-
        out += lam * (vp * du + np.roll(vm * du, 1, axis=ax))
    return out


def propagate(f0, direction, config, grid=None, t_final=None, symbol="lattice",
              n_steps=None, on_step=None):
    """Evolve a grid function over [0, t_final].

    direction="fokker_planck" evolves densities (mass conserving);
    direction="forward" evolves observables u_t = -(-Delta)^(alpha/2) u + b.grad u.
    ``on_step(step, time, field)`` is called after every full step.
    """
    if direction not in ("forward", "fokker_planck"):
        raise ConfigError("direction must be 'forward' or 'fokker_planck'")
    grid = grid or Grid3D(*config.grid)
    p = config.params
    T = config.t_final if t_final is None else t_final
    steps = n_steps or max(1, int(math.ceil(T / config.dt - 1e-9)))
    h = T / steps
    f = np.asarray(f0, float).copy()
    if f.shape != (grid.N,) * 3:
        raise ConfigError("initial field does not match the grid")
    mult = np.exp(-h * grid.symbol(p.alpha, symbol))
    vel = None
    if p.kappa > 0:
        vel = _face_velocity(grid, p)
        vmax = max(float(np.abs(v).max()) for v in vel)
        if vmax * h > 0.5 * grid.dx:
            raise ConfigError(
                f"CFL violated: max|b_eps| h = {vmax * h:.3g} > half a cell ({grid.dx / 2:.3g})"
            )
    lam = 0.5 * h / grid.dx
    step_fn = _fv_step if direction == "fokker_planck" else _fv_step_transpose
    for n in range(steps):
        if vel is not None:
            f = step_fn(f, vel, lam)
        f = np.fft.irfftn(np.fft.rfftn(f) * mult, s=f.shape, axes=(0, 1, 2))
        if vel is not None:
            f = step_fn(f, vel, lam)
        if on_step is not None:
            on_step(n + 1, (n + 1) * h, f)
    return f


def _smoothed_kernel_profile(w, t, alpha, r_max):
    """r -> (p_t * g_w)(r) for a unit-mass Gaussian g_w, by radial quadrature."""
    tab = get_table(alpha)
    scale = max(w, t ** (1 / alpha))
    s_max = r_max + 12 * w
    gx, gwt = np.polynomial.legendre.leggauss(24)
    edges = np.unique(np.concatenate([
        [0.0], np.geomspace(1e-4 * scale, scale, 30), np.geomspace(scale, s_max, 200),
    ]))
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * (edges[1:] - edges[:-1])
    s = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    sw = (half[:, None] * gwt[None, :]).ravel() * 4 * math.pi * s**2 * tab.kernel_r(t, s)
    norm = (2 * math.pi * w * w) ** 1.5

    def profile(r):
        r = np.maximum(np.asarray(r, float), 1e-9)
        out = np.empty_like(r)
        for i in range(0, r.size, 256):
            rc = r[i:i + 256, None]
            # spherical mean of the Gaussian over a sphere of radius s about a point at rc
            a = np.exp(-0.5 * (rc - s) ** 2 / w**2)
            b = np.exp(-0.5 * (rc + s) ** 2 / w**2)
            mean = w * w * (a - b) / (2 * rc * s) / norm
            out[i:i + 256] = (mean * sw).sum(1)
        return out

    return profile


def free_convolution_periodic(f0_width, center, grid, t, alpha, near=1, far=12):
    """Free evolution of a unit-mass Gaussian bump on the periodic box.

    Independent of the spectral solver: the bump is convolved with the
    tabulated free kernel in real space and periodised by summing images.
    Images with |m|_inf <= near are evaluated on the full grid, those up to
    ``far`` on a coarse grid (their sum is smooth across the box), and the
    mass of all remaining images is spread uniformly.
    """
    L = grid.L
    c = np.asarray(center, float)
    pts = grid.points().reshape(-1, 3) - c
    r_near = math.sqrt(3) * L * (near + 1)
    rr = np.linspace(0.0, r_near, 6000)
    prof = _smoothed_kernel_profile(f0_width, t, alpha, r_near)(rr)
    shifts = range(-near, near + 1)
    out = np.zeros(pts.shape[0])
    for i in shifts:
        for j in shifts:
            for k in shifts:
                r = np.linalg.norm(pts + L * np.array([i, j, k]), axis=1)
                out += np.interp(r, rr, prof)

    # far images: the Gaussian only perturbs the kernel at relative order w^2/r^2
    tab = get_table(alpha)
    coarse_axis = np.linspace(-L / 2, L / 2, 9)
    cg = np.stack(np.meshgrid(coarse_axis, coarse_axis, coarse_axis, indexing="ij"), -1).reshape(-1, 3)
    m = np.arange(-far, far + 1)
    M = np.stack(np.meshgrid(m, m, m, indexing="ij"), -1).reshape(-1, 3)
    M = M[np.abs(M).max(1) > near]
    far_sum = np.zeros(cg.shape[0])
    for chunk in np.array_split(M, max(1, M.shape[0] // 2000)):
        r = np.linalg.norm((cg - c)[:, None, :] + L * chunk[None, :, :], axis=2)
        p = tab.kernel_r(t, r)
        lap = (tab.grad_kernel(t, r * 0.999) - tab.grad_kernel(t, r * 1.001)) / (0.002 * r)
        lap -= 2 / r * tab.grad_kernel(t, r)
        far_sum += (p + 0.5 * f0_width**2 * lap).sum(1)
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator((coarse_axis,) * 3, far_sum.reshape(9, 9, 9), method="cubic")
    out += interp(np.clip(grid.points().reshape(-1, 3), -L / 2, L / 2))
    out = out.reshape((grid.N,) * 3)
    out += (1.0 - grid.integral(out)) / L**3
    return out


def contraction_and_ultracontractivity_check(config, grid=None, f0=None, t_final=2.0,
                                             t_window=(0.1, 2.0), symbol="lattice",
                                             tol=1e-3):
    """Track L^1, L^2, L^inf norms of a forward run against the initial data.

    Returns a report dict; ``ok`` is False and ``offending`` lists slices
    where a norm grew by more than ``tol`` relative.
    """
    grid = grid or Grid3D(*config.grid)
    if f0 is None:
        f0 = gaussian_bump(grid, (0.5, -0.25, 0.0), 0.5)
    vol = grid.cell_volume
    n1 = float(np.abs(f0).sum() * vol)
    n2 = float(math.sqrt((f0 * f0).sum() * vol))
    ninf = float(np.abs(f0).max())
    slices = []
    offending = []
    d, a = config.params.d, config.params.alpha

    def record(step, time, u):
        r = {
            "time": time,
            "l1": float(np.abs(u).sum() * vol),
            "l2": float(math.sqrt((u * u).sum() * vol)),
            "linf": float(np.abs(u).max()),
            "min": float(u.min()),
        }
        slices.append(r)
        if (r["l1"] > n1 * (1 + tol) or r["l2"] > n2 * (1 + tol)
                or r["linf"] > ninf * (1 + tol) or r["min"] < -1e-10 * ninf):
            offending.append(r)

    propagate(f0, "forward", config, grid, t_final=t_final, symbol=symbol, on_step=record)
    in_window = [s for s in slices if t_window[0] <= s["time"] <= t_window[1] + 1e-12]
    c_n = max(s["linf"] * s["time"] ** (d / a) / n1 for s in in_window)
    return {
        "ok": not offending,
        "offending": offending,
        "c_N": c_n,
        "initial": {"l1": n1, "l2": n2, "linf": ninf},
        "slices": slices,
    }


def write_snapshot(path, field_, grid, time=None, extra=None):
    """Raw little-endian float64 array plus a JSON sidecar."""
    arr = np.ascontiguousarray(field_, dtype="<f8")
    tmp = f"{path}.tmp{os.getpid()}"
    arr.tofile(tmp)
    os.replace(tmp, path)
    meta = {"shape": list(arr.shape), "dtype": "<f8", "box": [-grid.L / 2, grid.L / 2],
            "L": grid.L, "N": grid.N, "time": time}
    meta.update(extra or {})
    _atomic_write_text(path + ".json", json.dumps(meta, indent=2, sort_keys=True))


def read_snapshot(path):
    with open(path + ".json") as fh:
        meta = json.load(fh)
    arr = np.fromfile(path, dtype=meta["dtype"]).reshape(meta["shape"])
    return arr, meta
