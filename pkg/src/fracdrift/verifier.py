"""Numerical experiments for the kernel bounds, organised by regime.

Each ``verify_*`` function reduces a :class:`~fracdrift.simulator.KernelField`
(or a PDE run) to a :class:`BoundReport`: an empirical constant, its
standard error, its change under one refinement, and a verdict.  Bounds
whose constants are not known numerically pass when the estimated constant
is finite and moves by at most ``TREND_TOL`` under refinement.

The ``*_field`` builders produce the default designs used by the CLI and
by the acceptance suite.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import ConfigError, ModelParams
from .simulator import (
    Grid3D,
    KernelField,
    SimConfig,
    _atomic_write_text,
    estimate_kernel,
    estimate_kernel_adjoint,
    euler_paths,
    killed_population,
    propagate,
)
from .stable_kernel import get_table

__all__ = [
    "Regime",
    "BoundReport",
    "TREND_TOL",
    "USABLE_REL",
    "THEOREMS",
    "ray_points",
    "forward_field",
    "adjoint_field",
    "two_sided_design",
    "far_field_design",
    "verify_nie_w",
    "verify_standard_ub",
    "verify_two_sided",
    "verify_desingularizing_l1",
    "verify_integral_lower",
    "verify_annulus_bounds",
    "verify_lower_standard",
    "write_reports",
]

TREND_TOL = 0.15
USABLE_REL = 0.25
SMALL_Y = tuple(np.geomspace(0.02, 0.5, 8))
ADJOINT_SHARE = 0.4
FAR_D = (2.0, 5.0, 10.0, 20.0)
THEOREMS = (
    "weighted_nash",
    "standard_upper",
    "two_sided",
    "desingularizing_l1",
    "integral_lower",
    "annulus",
    "lower_standard",
)

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


def _norm(v):
    return np.sqrt(np.sum(np.asarray(v, float) ** 2, axis=-1))


def _scale(t, alpha):
    return np.asarray(t, float) ** (1.0 / alpha)


# ---------------------------------------------------------------- regimes


@dataclass(frozen=True)
class Regime:
    """A named predicate on design points (t, x, y), in natural units."""

    name: str
    kind: str
    lo: float = 0.0
    hi: float = math.inf

    def mask(self, t, x, y, alpha):
        s = _scale(t, alpha)
        rx, ry = _norm(x) / s, _norm(y) / s
        if self.kind == "all":
            return np.ones(rx.shape, bool)
        if self.kind == "near_origin_y":
            return ry < self.hi
        if self.kind == "far_x":
            return rx > self.lo
        if self.kind == "both_far":
            return (rx >= self.lo) & (ry >= self.lo)
        if self.kind == "annulus_y":
            return (ry >= self.lo) & (ry <= self.hi)
        raise ValueError(f"unknown regime kind {self.kind!r}")

    def field_mask(self, kf, alpha):
        return self.mask(kf.t, kf.x, kf.y, alpha)

    @classmethod
    def everywhere(cls):
        return cls("all", "all")

    @classmethod
    def near_origin_y(cls, frac=1.0):
        return cls(f"|y|<{frac:g}s", "near_origin_y", hi=frac)

    @classmethod
    def far_x(cls, D):
        return cls(f"|x|>{D:g}s", "far_x", lo=D)

    @classmethod
    def both_far(cls, r):
        return cls(f"|x|,|y|>={r:g}s", "both_far", lo=r)


# ---------------------------------------------------------------- reports


@dataclass
class BoundReport:
    theorem: str
    regime: str
    statistic: str
    value: float
    stderr: float = math.nan
    refined: float = math.nan
    trend: float = math.nan
    verdict: str = "inconclusive"
    details: dict = field(default_factory=dict)
    parts: list = field(default_factory=list)

    def as_dict(self):
        d = asdict(self)
        d["parts"] = [p.as_dict() if isinstance(p, BoundReport) else p for p in self.parts]
        return _jsonable(d)

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def rows(self):
        out = [self]
        for p in self.parts:
            out.extend(p.rows())
        return out

    def to_text(self):
        head = ("theorem", "regime", "statistic", "value", "stderr", "refined", "trend", "verdict")
        body = [
            (r.theorem, r.regime, r.statistic, _fmt(r.value), _fmt(r.stderr),
             _fmt(r.refined), _fmt(r.trend), r.verdict)
            for r in self.rows()
        ]
        widths = [max(len(h), *(len(row[i]) for row in body)) for i, h in enumerate(head)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body]
        return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    return f"{v:.6g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_reports(reports, out_dir):
    """One JSON and one aligned-text file per theorem id."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for rep in reports:
        base = os.path.join(out_dir, rep.theorem)
        _atomic_write_text(base + ".json", rep.to_json() + "\n")
        _atomic_write_text(base + ".txt", rep.to_text())
        paths.append(base + ".json")
    return paths


_RANK = {"pass": 0, "inconclusive": 1, "fail": 2}


def worst(verdicts):
    return max(verdicts, key=_RANK.__getitem__, default="inconclusive")


def _trend(value, refined):
    if refined is None or not (np.isfinite(value) and np.isfinite(refined)) or value == 0:
        return math.nan
    return abs(refined - value) / abs(value)


def _stability_verdict(value, refined, ok=True):
    """pass when finite, positive and stable; fail on a violated explicit tolerance."""
    if not ok:
        return "fail"
    if not (np.isfinite(value) and value > 0):
        return "fail"
    tr = _trend(value, refined)
    if math.isnan(tr):
        return "inconclusive"
    return "pass" if tr <= TREND_TOL else "fail"


# ---------------------------------------------------------------- designs


def ray_points(radii, directions=(E1,)):
    pts = [r * np.asarray(d, float) for d in directions for r in radii]
    return np.array(pts, float)


def forward_field(config, xs, ys_for, label="fwd"):
    """Forward-path estimates: one batch of paths per start point.

    ``ys_for(x)`` lists the target points for start x.
    """
    parts = []
    for x in np.atleast_2d(xs):
        ep = euler_paths(x, config, label=label)
        parts.append(estimate_kernel(x, ys_for(x), config, endpoints=ep))
    return KernelField.concat(parts, backend="MC")


def adjoint_field(config, ys, xs, c_bw=1.0, n_particles=None):
    """Adjoint estimates: one killed population per target point y."""
    parts = []
    for y in np.atleast_2d(ys):
        pop = killed_population(y, config, n_particles=n_particles)
        f = estimate_kernel_adjoint(xs, y, config, population=pop, c_bw=c_bw)
        f.meta["mass"] = pop.mass.tolist()
        parts.append(f)
    return KernelField.concat(parts, backend="MC-adjoint")


def two_sided_design(config, adjoint_particles=None):
    """Default field for the weighted two-sided and Nash-type bounds.

    Forward paths from x on the e1 ray reach y on three rays at moderate
    radii; killed populations started at the small-|y| sequence on the e2
    ray supply the near-origin column.  A killed particle costs about seven
    forward paths, so by default the populations get ADJOINT_SHARE of the
    path budget.
    """
    if adjoint_particles is None:
        adjoint_particles = int(ADJOINT_SHARE * config.n_paths)
    t = config.t_final
    s = float(_scale(t, config.params.alpha))
    xs = ray_points([0.0, 0.05 * s, 0.2 * s, 1.0 * s, 2.0 * s, 5.0 * s])
    ys = ray_points([0.2 * s, 0.5 * s, 1.0 * s, 2.0 * s, 5.0 * s], (E1, E2, -E1))
    fwd = forward_field(config, xs, lambda x: ys)
    slope_xs = np.array([s * E1, -s * E1, s * E3, -s * E3, 2 * s * E1])
    small = ray_points([r * s for r in SMALL_Y], (E2,))
    adj = adjoint_field(config, small, slope_xs, n_particles=adjoint_particles)
    return KernelField.concat([fwd, adj])


def far_field_design(config, D_values=FAR_D):
    """Forward estimates just outside each |x| = D t^(1/alpha).

    Targets sit on the ray through x, both sides of x, and off the ray, so
    that the local maximum of the kernel ratio is bracketed.
    """
    s = float(_scale(config.t_final, config.params.alpha))
    xs = ray_points([1.05 * D * s for D in D_values])

    def ys_for(x):
        u = x / np.linalg.norm(x)
        along = [x + c * s * u for c in (-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0)]
        across = [x + c * s * E2 for c in (0.5, 1.0)]
        return np.array(along + across)

    return forward_field(config, xs, ys_for, label="far")


# ---------------------------------------------------------------- field ops


def _weighted_rho(kf, alpha, weights, denom):
    tab = get_table(alpha)
    d = kf.x.shape[1]
    base = tab.kernel(kf.t, kf.x, kf.y) if denom == "kernel" else kf.t ** (-d / alpha)
    if weights is not None:
        psi = np.array([weights.psi(float(t), y) for t, y in zip(kf.t, kf.y)])
        base = base * psi
    with np.errstate(divide="ignore", invalid="ignore"):
        return kf.estimate / base, kf.stderr / base


def _usable(kf):
    return (kf.estimate > 0) & (kf.rel_err < USABLE_REL)


def _match(kf, ref):
    """Index of each point of kf in ref (same t, x, y), -1 when absent."""
    key = lambda f, i: (round(float(f.t[i]), 12), *np.round(f.x[i], 12), *np.round(f.y[i], 12))
    lookup = {key(ref, j): j for j in range(len(ref))}
    return np.array([lookup.get(key(kf, i), -1) for i in range(len(kf))])


def _paired(kf, refined):
    """Masks of points usable in kf and (when given) in the refined field."""
    use = _usable(kf)
    if refined is None:
        return use, None
    j = _match(kf, refined)
    ok = j >= 0
    use &= ok
    use[ok] &= _usable(refined)[j[ok]]
    return use, j


def _extreme(kf, mask, alpha, weights, denom, how, refined=None, j=None):
    rho, se = _weighted_rho(kf, alpha, weights, denom)
    if not mask.any():
        return math.nan, math.nan, math.nan, None
    idx = np.flatnonzero(mask)
    pick = idx[np.argmax(rho[idx])] if how == "sup" else idx[np.argmin(rho[idx])]
    ref = math.nan
    if refined is not None:
        rr, _ = _weighted_rho(refined, alpha, weights, denom)
        vals = rr[j[idx]]
        ref = float(vals.max() if how == "sup" else vals.min())
    return float(rho[pick]), float(se[pick]), ref, int(pick)


def _point(kf, i):
    if i is None:
        return None
    return {"t": float(kf.t[i]), "x": kf.x[i].tolist(), "y": kf.y[i].tolist()}


def verify_nie_w(field_, weights, refined=None, alpha=1.5):
    """sup of estimate / (t^(-d/alpha) psi_t(y)) over the usable design.

    ``weights=None`` replaces psi by 1 (the unweighted control).
    """
    s = _scale(field_.t, alpha)
    if weights is not None and not np.any(_norm(field_.y) <= 0.02 * s * (1 + 1e-9)):
        raise ConfigError("design needs y points down to |y| = 0.02 t^(1/alpha)")
    use, j = _paired(field_, refined)
    v, se, ref, i = _extreme(field_, use, alpha, weights, "nash", "sup", refined, j)
    return BoundReport(
        "weighted_nash", "all", "sup", v, se, ref, _trend(v, ref), _stability_verdict(v, ref),
        {"n_usable": int(use.sum()), "n_points": len(field_), "argmax": _point(field_, i)},
    )


def verify_standard_ub(field_, refined=None, alpha=1.5, D_values=FAR_D, far_tol=0.25):
    """Part (i): sup estimate/kernel.  Part (ii): the same sup restricted to
    |x| > D t^(1/alpha) must decrease in D and end below 1 + far_tol."""
    use, j = _paired(field_, refined)
    v, se, ref, i = _extreme(field_, use, alpha, None, "kernel", "sup", refined, j)
    part1 = BoundReport("standard_upper", "all", "sup", v, se, ref, _trend(v, ref),
                        _stability_verdict(v, ref), {"argmax": _point(field_, i)})
    sups, parts = [], []
    for D in D_values:
        m = use & Regime.far_x(D).field_mask(field_, alpha)
        vD, seD, refD, iD = _extreme(field_, m, alpha, None, "kernel", "sup", refined, j)
        sups.append(vD)
        parts.append(BoundReport("standard_upper", Regime.far_x(D).name, "sup", vD, seD, refD,
                                 _trend(vD, refD), "inconclusive" if math.isnan(vD) else "pass",
                                 {"D": D, "n_usable": int(m.sum()), "argmax": _point(field_, iD)}))
    finite = [x for x in sups if np.isfinite(x)]
    monotone = all(b <= a * (1 + 1e-12) for a, b in zip(finite, finite[1:]))
    last = sups[-1]
    if math.isnan(last):
        far_verdict = "inconclusive"
    else:
        far_verdict = "pass" if monotone and last <= 1 + far_tol else "fail"
    part2 = BoundReport("standard_upper", "far_x", "sup(D)", last, parts[-1].stderr,
                        parts[-1].refined, parts[-1].trend, far_verdict,
                        {"D": list(D_values), "sup": sups, "monotone": monotone,
                         "tolerance": 1 + far_tol}, parts)
    return BoundReport("standard_upper", "all", "sup", v, se, ref, part1.trend,
                       worst([part1.verdict, far_verdict]), {}, [part1, part2])


def _slope_fit(kf, mask, alpha, lo=0.02, hi=0.5):
    """Weighted least squares of log(estimate/kernel) on log|y| with one
    intercept per start point x; returns (slope, stderr, n_points, n_x)."""
    s = _scale(kf.t, alpha)
    ry = _norm(kf.y) / s
    m = mask & (ry >= lo * (1 - 1e-9)) & (ry <= hi * (1 + 1e-9))
    if m.sum() < 8:
        return math.nan, math.nan, int(m.sum()), 0
    tab = get_table(alpha)
    ly = np.log(ry[m])
    lr = np.log(kf.estimate[m] / tab.kernel(kf.t[m], kf.x[m], kf.y[m]))
    w = 1.0 / np.maximum(kf.rel_err[m], 1e-6) ** 2
    keys = [tuple(np.round(v, 12)) for v in kf.x[m]]
    groups = sorted(set(keys))
    # keep start points with at least three usable radii
    counts = {g: keys.count(g) for g in groups}
    groups = [g for g in groups if counts[g] >= 3]
    sel = np.array([k in groups for k in keys])
    if sel.sum() < 8:
        return math.nan, math.nan, int(sel.sum()), len(groups)
    A = np.zeros((sel.sum(), len(groups) + 1))
    A[:, 0] = ly[sel]
    for c, g in enumerate(groups):
        A[:, c + 1] = [k == g for k, s_ in zip(keys, sel) if s_]
    ws = w[sel]
    sw = np.sqrt(ws)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], lr[sel] * sw, rcond=None)
    bread = np.linalg.pinv((A * ws[:, None]).T @ A)
    # all start points at one y share a killed population, so residuals are
    # clustered by y; sandwich covariance with one cluster per radius
    score = A * (ws * (lr[sel] - A @ coef))[:, None]
    _, cl = np.unique(np.round(np.log(ry[m][sel]), 9), return_inverse=True)
    meat = np.zeros((A.shape[1], A.shape[1]))
    for c in range(cl.max() + 1):
        g = score[cl == c].sum(axis=0)
        meat += np.outer(g, g)
    cov = bread @ meat @ bread
    ncl = cl.max() + 1
    if ncl > 1:
        cov *= ncl / (ncl - 1)
    return float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0))), int(sel.sum()), len(groups)


def verify_two_sided(field_, weights, refined=None, alpha=1.5, slope_tol=0.1):
    """rho = estimate / (kernel psi_t(y)): sup and inf over usable points,
    plus the small-|y| log-log slope which must match the weight exponent."""
    use, j = _paired(field_, refined)
    up, se_u, ref_u, iu = _extreme(field_, use, alpha, weights, "kernel", "sup", refined, j)
    lo, se_l, ref_l, il = _extreme(field_, use, alpha, weights, "kernel", "inf", refined, j)
    upper = BoundReport("two_sided", "all", "sup", up, se_u, ref_u, _trend(up, ref_u),
                        _stability_verdict(up, ref_u), {"argmax": _point(field_, iu)})
    lower = BoundReport("two_sided", "all", "inf", lo, se_l, ref_l, _trend(lo, ref_l),
                        _stability_verdict(lo, ref_l), {"argmin": _point(field_, il)})

    small = _usable(field_)
    slope, slope_se, n_pts, n_x = _slope_fit(field_, small, alpha)
    ref_slope = math.nan
    if refined is not None:
        ref_slope = _slope_fit(refined, _usable(refined), alpha)[0]
    beta = weights.beta
    if math.isnan(slope):
        sv = "inconclusive"
    else:
        sv = "pass" if abs(slope - beta) <= slope_tol else "fail"
    slope_rep = BoundReport("two_sided", "|y| in [0.02,0.5]s", "slope", slope, slope_se,
                            ref_slope, _trend(slope, ref_slope), sv,
                            {"beta": beta, "tolerance": slope_tol, "n_points": n_pts,
                             "n_starts": n_x})
    parts = [upper, lower, slope_rep]
    return BoundReport("two_sided", "all", "sup/inf", up, se_u, ref_u, upper.trend,
                       worst([p.verdict for p in parts]),
                       {"n_usable": int(use.sum()), "n_points": len(field_),
                        "series": _slope_series(field_, small, alpha)}, parts)


def _slope_series(kf, mask, alpha, lo=0.02, hi=0.5):
    """Ratio series along |y| at the start point with the most usable radii."""
    s = _scale(kf.t, alpha)
    ry = _norm(kf.y) / s
    m = mask & (ry >= lo * (1 - 1e-9)) & (ry <= hi * (1 + 1e-9))
    if not m.any():
        return {"x": None, "ry": [], "rho": [], "err": []}
    keys = [tuple(np.round(v, 12)) for v in kf.x]
    best = max({keys[i] for i in np.flatnonzero(m)},
               key=lambda k: sum(keys[i] == k for i in np.flatnonzero(m)))
    sel = np.array([m[i] and keys[i] == best for i in range(len(kf))])
    kern = get_table(alpha).kernel(kf.t[sel], kf.x[sel], kf.y[sel])
    order = np.argsort(ry[sel])
    return {"x": list(best), "ry": ry[sel][order], "rho": (kf.estimate[sel] / kern)[order],
            "err": (kf.stderr[sel] / kern)[order]}


def verify_lower_standard(field_, refined=None, alpha=1.5, radii=(1.0, 2.0, 4.0)):
    """inf estimate/kernel over |x|, |y| >= r t^(1/alpha) for each r."""
    use, j = _paired(field_, refined)
    rho, se_all = _weighted_rho(field_, alpha, None, "kernel")
    parts = []
    for r in radii:
        reg = Regime.both_far(r).field_mask(field_, alpha)
        m = use & reg
        v, se, ref, i = _extreme(field_, m, alpha, None, "kernel", "inf", refined, j)
        verdict = "inconclusive" if math.isnan(v) else _stability_verdict(v, ref)
        # excluded points whose 2-sigma upper bound lies below the usable inf
        # could carry the true infimum
        excl = reg & ~use
        bound = float(np.min(rho[excl] + 2 * se_all[excl])) if excl.any() else math.nan
        if verdict == "pass" and bound < v:
            verdict = "inconclusive"
        parts.append(BoundReport("lower_standard", Regime.both_far(r).name, "inf", v, se, ref,
                                 _trend(v, ref), verdict,
                                 {"r": r, "n_usable": int(m.sum()), "n_excluded": int(excl.sum()),
                                  "excluded_upper_bound": bound, "argmin": _point(field_, i)}))
    vals = [p.value for p in parts if np.isfinite(p.value)]
    monotone = all(b >= a * (1 - TREND_TOL) for a, b in zip(vals, vals[1:]))
    head = parts[0]
    verdict = worst([p.verdict for p in parts] + ["pass" if monotone else "fail"])
    return BoundReport("lower_standard", head.regime, "inf", head.value, head.stderr,
                       head.refined, head.trend, verdict, {"nondecreasing": monotone}, parts)


# ---------------------------------------------------------------- killed moments


def verify_desingularizing_l1(direction, t, config, radii=(0.05, 0.1, 0.2, 0.5, 1.0, 2.0),
                              n_particles=None, refine=True, slope_tol=0.15, backend="mc",
                              grid=None):
    """Weighted and unweighted column integrals of the kernel against psi_t.

    For each x = r t^(1/alpha) direction the quantities
    <p_t(., x) psi_t> / psi_t(x) and <p_t(., x)> / psi_t(x) are estimated;
    both must stay bounded as |x| -> 0, and <p_t(., x)> must vanish like
    |x|^beta.  backend="mc" uses killed populations started at x;
    backend="pde" propagates psi_t and 1 with the density equation once and
    reads every x off the grid.
    """
    params = config.params
    w = params.weights
    s = float(_scale(t, params.alpha))
    u = np.asarray(direction, float)
    u = u / np.linalg.norm(u)
    xs = np.array([r * s * u for r in radii])
    psi_x = np.array([w.psi(t, x) for x in xs])
    cfg = config.with_(t_final=t)

    def run(n):
        out = []
        for x in xs:
            pop = killed_population(x, cfg, n_particles=n)
            out.append((pop.moments(lambda z: w.psi(t, z)), pop.moments(lambda z: np.ones(len(z)))))
        return out

    if backend == "mc":
        n0 = n_particles or config.n_paths
        base = run(n0)
        ref = run(2 * n0) if refine else None
    elif backend == "pde":
        base = _pde_column_moments(xs, t, cfg, grid or Grid3D(*config.grid))
        ref = None
        if refine:
            g = grid or Grid3D(*config.grid)
            base_n = {64: 96, 96: 128, 128: 192}.get(g.N, 2 * g.N)
            ref = _pde_column_moments(xs, t, cfg, Grid3D(g.L, base_n))
    else:
        raise ConfigError(f"unknown backend {backend!r}")

    def constants(res):
        a = np.array([m[0][0] for m in res]) / psi_x
        b = np.array([m[1][0] for m in res]) / psi_x
        sa = np.array([m[0][1] for m in res]) / psi_x
        sb = np.array([m[1][1] for m in res]) / psi_x
        return a, b, sa, sb

    a, b, sa, sb = constants(base)
    ra, rb = (constants(ref)[:2] if ref is not None else (None, None))
    mass = np.array([m[1][0] for m in base])
    small = np.asarray(radii) <= 0.5
    slope = math.nan
    if small.sum() >= 3 and np.all(mass[small] > 0):
        slope = float(np.polyfit(np.log(np.asarray(radii)[small]), np.log(mass[small]), 1)[0])

    parts = []
    for name, vals, ses, rvals in (("weighted", a, sa, ra), ("unweighted", b, sb, rb)):
        i = int(np.argmax(vals))
        v = float(vals[i])
        r_ = float(np.max(rvals)) if rvals is not None else math.nan
        parts.append(BoundReport("desingularizing_l1", f"|x|>={min(radii):g}s", f"sup {name}",
                                 v, float(ses[i]), r_, _trend(v, r_),
                                 _stability_verdict(v, r_),
                                 {"radii": list(radii), "ratios": vals,
                                  "refined_ratios": rvals, "stderr": ses}))
    sv = "inconclusive" if math.isnan(slope) else (
        "pass" if abs(slope - params.beta) <= slope_tol else "fail")
    parts.append(BoundReport("desingularizing_l1", "|x|<=0.5s", "mass slope", slope,
                             verdict=sv, details={"beta": params.beta, "tolerance": slope_tol,
                                                  "mass": mass}))
    return BoundReport("desingularizing_l1", parts[0].regime, "sup", parts[0].value,
                       parts[0].stderr, parts[0].refined, parts[0].trend,
                       worst([p.verdict for p in parts]), {"backend": backend}, parts)


def _grid_interp(grid, f, pts):
    from scipy.interpolate import RegularGridInterpolator

    ax = grid.axis
    # pad periodically so that points near the faces interpolate
    ext = np.concatenate([[ax[0] - grid.dx], ax, [ax[-1] + grid.dx]])
    fp = np.pad(f, 1, mode="wrap")
    return RegularGridInterpolator((ext,) * 3, fp, method="linear")(pts)


def _pde_column_moments(xs, t, config, grid):
    d = grid.dx
    for x in xs:
        if 6 * d > np.linalg.norm(x):
            raise ConfigError(
                f"grid spacing {d:g} cannot resolve |x| = {np.linalg.norm(x):g}; "
                "need |x| >= 6 cells"
            )
    w = config.params.weights
    psi = w.psi(t, grid.points())
    out_w = propagate(psi, "fokker_planck", config, grid, t_final=t)
    out_1 = propagate(np.ones_like(psi), "fokker_planck", config, grid, t_final=t)
    vw, v1 = _grid_interp(grid, out_w, xs), _grid_interp(grid, out_1, xs)
    return [((float(a), 0.0), (float(b), 0.0)) for a, b in zip(vw, v1)]


# ---------------------------------------------------------------- PDE ops


def _bump_family(t, alpha):
    s = float(_scale(t, alpha))
    centers = [0.0, 0.25, 0.5, 1.0, 2.0]
    out = []
    for c in centers:
        for wdt in (0.25, 0.5):
            out.append((np.array([c * s, 0.0, 0.0]), wdt * s))
    return out


def _bump(grid, center, width):
    c = np.asarray(center, float)
    X, Y, Z = grid.mesh()
    q = (X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2
    return np.exp(-0.5 * q / width**2)


def _integral_lower_on(grid, t, config, bumps):
    w = config.params.weights
    psi = w.psi(t, grid.points())
    ratios = []
    for center, width in bumps:
        if np.max(np.abs(center)) + 5 * width > grid.L / 2 - 2 * grid.dx:
            raise ConfigError("bump extends into the box margin")
        h = _bump(grid, center, width)
        u = propagate(h, "forward", config, grid, t_final=t)
        ratios.append(float((psi * u).sum() / (psi * h).sum()))
    return np.array(ratios)


def verify_integral_lower(t, config, grid=None, refine=True, bumps=None):
    """inf over bumps h of <psi_t e^{-t Lambda} h> / <psi_t h> (estimates nu)."""
    grid = grid or Grid3D(*config.grid)
    bumps = bumps or _bump_family(t, config.params.alpha)
    cfg = config.with_(t_final=t)
    r0 = _integral_lower_on(grid, t, cfg, bumps)
    r1 = None
    if refine:
        r1 = _integral_lower_on(Grid3D(grid.L, _refine_n(grid.N)), t, cfg, bumps)
    v = float(r0.min())
    ref = float(r1.min()) if r1 is not None else math.nan
    return BoundReport(
        "integral_lower", "bumps", "inf", v, math.nan, ref, _trend(v, ref),
        _stability_verdict(v, ref),
        {"ratios": r0, "refined_ratios": r1,
         "bumps": [{"center": c.tolist(), "width": wd} for c, wd in bumps],
         "grid": [grid.L, grid.N]},
    )


def _refine_n(n):
    return {32: 48, 48: 64, 64: 96, 96: 128, 128: 192}.get(n, 2 * n)


def _smooth_annulus(grid, r, R):
    rad = grid.radius()
    inner = np.clip((rad - r) / grid.dx + 0.5, 0.0, 1.0)
    outer = np.clip((R - rad) / grid.dx + 0.5, 0.0, 1.0)
    return inner * outer


def _annulus_margins(grid, t, config, r, R, nu):
    w = config.params.weights
    s = float(_scale(t, config.params.alpha))
    ind = _smooth_annulus(grid, r * s, R * s)
    psi = w.psi(t, grid.points())
    a = propagate(ind, "forward", config, grid, t_final=t)
    b = propagate(psi * ind, "fokker_planck", config, grid, t_final=t)
    inside = grid.radius() <= s
    m1 = float(a[inside].min() - 0.5)
    m2 = float((b[inside] / psi[inside]).min() - nu / 2)
    return m1, m2


def verify_annulus_bounds(t, config, nu, grid=None, r_values=(0.05, 0.1, 0.2),
                          R_values=(4.0, 8.0, 16.0)):
    """Scan (r, R) for an annulus whose smoothed indicator satisfies
    e^{-t Lambda} 1_A >= 1/2 and e^{-t Lambda*}(psi_t 1_A) >= (nu/2) psi_t
    at every grid point of the ball of radius t^(1/alpha)."""
    grid = grid or Grid3D(*config.grid)
    cfg = config.with_(t_final=t)
    s = float(_scale(t, config.params.alpha))
    scan = []
    found = None
    for R in R_values:
        for r in r_values:
            m1, m2 = _annulus_margins(grid, t, cfg, r, R, nu)
            rec = {"r": r, "R": R, "margin_mass": m1, "margin_weighted": m2,
                   "sub_cell_inner": r * s < grid.dx, "box_limited": R * s > grid.L / 2}
            scan.append(rec)
            if found is None and m1 >= 0 and m2 >= 0:
                found = rec
    evaluated = [s_ for s_ in scan if "margin_mass" in s_]
    if found is not None:
        verdict, value = "pass", min(found["margin_mass"], found["margin_weighted"])
    elif evaluated:
        best = max(evaluated, key=lambda s_: min(s_["margin_mass"], s_["margin_weighted"]))
        verdict, value = "fail", min(best["margin_mass"], best["margin_weighted"])
    else:
        verdict, value = "inconclusive", math.nan
    return BoundReport("annulus", "|x|<=s", "min margin", value, verdict=verdict,
                       details={"found": found, "scan": scan, "nu": nu,
                                "grid": [grid.L, grid.N]})


# ---------------------------------------------------------------- suite


def default_configs(kappa=5.0, t=1.0, n_paths=1_000_000, seed=0):
    """(Monte Carlo config, PDE config) used by the CLI and acceptance suite."""
    mc = SimConfig(ModelParams(kappa=kappa, eps=1e-6), t_final=t, n_paths=n_paths, seed=seed)
    L, N = 16.0, 64
    pde = SimConfig(ModelParams(kappa=kappa, eps=(L / N) ** 2), t_final=t, n_paths=n_paths,
                    seed=seed, grid=(L, N))
    return mc, pde


def run_suite(mc, pde, theorems=THEOREMS, log=None):
    """Run the requested experiments; returns {theorem: BoundReport}."""
    unknown = set(theorems) - set(THEOREMS)
    if unknown:
        raise ConfigError(f"unknown theorem ids: {sorted(unknown)}")
    log = log or (lambda msg: None)
    w = mc.params.weights
    a = mc.params.alpha
    t = mc.t_final
    out = {}
    need_two = {"weighted_nash", "two_sided", "standard_upper", "lower_standard"} & set(theorems)
    if need_two:
        log("two-sided design (base)")
        base = two_sided_design(mc)
        log("two-sided design (refined)")
        ref = two_sided_design(mc.with_(n_paths=2 * mc.n_paths))
    if "weighted_nash" in theorems:
        out["weighted_nash"] = verify_nie_w(base, w, ref, a)
    if "standard_upper" in theorems:
        log("far-field design")
        far = far_field_design(mc)
        far_ref = far_field_design(mc.with_(n_paths=2 * mc.n_paths))
        out["standard_upper"] = verify_standard_ub(KernelField.concat([base, far]),
                                                   KernelField.concat([ref, far_ref]), a)
    if "two_sided" in theorems:
        out["two_sided"] = verify_two_sided(base, w, ref, a)
    if "lower_standard" in theorems:
        if "standard_upper" not in theorems:
            far = far_field_design(mc)
            far_ref = far_field_design(mc.with_(n_paths=2 * mc.n_paths))
        out["lower_standard"] = verify_lower_standard(KernelField.concat([base, far]),
                                                      KernelField.concat([ref, far_ref]), a)
    if "desingularizing_l1" in theorems:
        log("killed moments")
        out["desingularizing_l1"] = verify_desingularizing_l1(
            E1, t, mc, n_particles=int(ADJOINT_SHARE * mc.n_paths))
    nu = None
    if {"integral_lower", "annulus"} & set(theorems):
        log("integral lower bound (PDE)")
        il = verify_integral_lower(t, pde)
        nu = il.value
        if "integral_lower" in theorems:
            out["integral_lower"] = il
    if "annulus" in theorems:
        log("annulus scan (PDE)")
        out["annulus"] = verify_annulus_bounds(t, pde, nu)
    return out
