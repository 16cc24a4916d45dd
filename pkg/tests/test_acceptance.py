"""Acceptance criteria 1-12 at their stated tolerances.

Each test records one line (verdict plus the measured numbers) through the
``acceptance_log`` fixture; the lines are printed in the terminal summary.
Criteria that do not hold are marked as strict expected failures with the
measured reason, so the run stays green only while the failure stays the
documented one.
"""

import json
import math
import os
import time

import numpy as np
import pytest
from scipy import stats

from fracdrift import appendix_props as ap
from fracdrift.cli import main
from fracdrift.model import ModelParams, WeightFamily, kappa_of_beta, solve_beta
from fracdrift.sampler import sample_stable_increment
from fracdrift.simulator import (
    Grid3D,
    KernelField,
    SimConfig,
    contraction_and_ultracontractivity_check,
    estimate_kernel,
    free_convolution_periodic,
    gaussian_bump,
    propagate,
)
from fracdrift.specfun import kappa_r
from fracdrift.stable_kernel import (
    StableKernelTable,
    estimate_k0,
    frac_laplacian_radial,
    get_table,
    p1_radial,
)
from fracdrift.verifier import (
    ADJOINT_SHARE,
    E1,
    default_configs,
    far_field_design,
    two_sided_design,
    verify_desingularizing_l1,
    verify_standard_ub,
    verify_two_sided,
)

ALPHA = 1.5
KAPPA = 5.0
DESK_PATHS = 1_000_000
FAR_PATHS = 200_000


def record(log, n, ok, summary):
    log[n] = ("pass" if ok else "fail", summary)
    return ok


def one_sided_derivative(f, x, h):
    """Fourth-order one-sided difference; h < 0 looks to the left."""
    c = (-25, 48, -36, 16, -3)
    return sum(ck * f(x + k * h) for k, ck in enumerate(c)) / (12 * h)


# ---------------------------------------------------------------- 1-5


def test_criterion_01_exponent_curve(acceptance_log):
    t0 = time.perf_counter()
    kappas = np.geomspace(1e-3, 1e3, 121)
    betas = np.array([solve_beta(k) for k in kappas])
    back = np.array([kappa_of_beta(b) for b in betas])
    rt = float(np.max(np.abs(back - kappas) / kappas))
    dt = time.perf_counter() - t0
    ok = (np.all(np.diff(betas) > 0) and betas.min() > 0 and betas.max() < ALPHA
          and betas[-1] > 1.45 and rt <= 1e-8 and dt < 1.0)
    record(acceptance_log, 1, ok, f"beta(1e3)={betas[-1]:.6f}, max round trip {rt:.1e}, {dt:.2f}s")
    assert ok


def test_criterion_02_weight_exactness(acceptance_log):
    b = solve_beta(KAPPA)
    w = WeightFamily(b, ALPHA)
    exact = w.eta(1.0) == 1.0 and abs(w.eta(2.0) - (1 + b / 2)) <= 4e-16
    left = one_sided_derivative(w.eta, 1.0, -1e-3)
    right = one_sided_derivative(w.eta, 1.0, 1e-3)
    dmatch = abs(left - right)
    rng = np.random.default_rng(20)
    t = rng.uniform(0.01, 10, 1000)
    s = t * rng.uniform(1, 100, 1000)
    x = rng.standard_normal((1000, 3)) * rng.uniform(0, 10, (1000, 1))
    psi_t = np.array([w.psi(ti, xi) for ti, xi in zip(t, x)])
    psi_s = np.array([w.psi(si, xi) for si, xi in zip(s, x)])
    low = (t / s) ** (b / ALPHA) * psi_t
    viol = int(np.sum(low > psi_s * (1 + 1e-14)) + np.sum(psi_s > psi_t * (1 + 1e-14)))
    ok = exact and dmatch <= 1e-10 and viol == 0
    record(acceptance_log, 2, ok, f"derivative mismatch {dmatch:.1e}, ordering violations {viol}")
    assert ok


def test_criterion_03_stable_kernel(acceptance_log):
    t0 = time.perf_counter()
    norm = abs(get_table(ALPHA).normalization() - 1)
    r = np.geomspace(0.01, 8.0, 20)
    gauss = float(np.max(np.abs(p1_radial(r, 2.0) - (4 * math.pi) ** -1.5 * np.exp(-r**2 / 4))))
    cauchy_tab = StableKernelTable.build(1.0)
    cauchy = float(np.max(np.abs(cauchy_tab.p1(r) - 1 / (math.pi**2 * (1 + r**2) ** 2))))
    tab = get_table(ALPHA)
    rng = np.random.default_rng(30)
    tt, rr, lam = rng.uniform(0.05, 20, 500), rng.uniform(0, 30, 500), rng.uniform(0.1, 10, 500)
    scal = float(np.max(np.abs(tab.kernel_r(lam**ALPHA * tt, lam * rr) * lam**3
                               / tab.kernel_r(tt, rr) - 1)))
    k0 = estimate_k0(ALPHA)
    k0d = estimate_k0(ALPHA, dilation=4.0)
    drift = abs(k0d.value - k0.value) / k0.value
    dt = time.perf_counter() - t0
    ok = (norm <= 1e-6 and gauss <= 1e-8 and cauchy <= 1e-8 and scal <= 1e-10
          and np.isfinite(k0.value) and drift <= 0.01 and dt < 30)
    record(acceptance_log, 3, ok,
           f"norm err {norm:.1e}, gauss {gauss:.1e}, cauchy {cauchy:.1e}, scaling {scal:.1e}, "
           f"k0={k0.value:.4g} drift {drift:.1e}, {dt:.1f}s")
    assert ok


def test_criterion_04_lyapunov_balance(acceptance_log):
    t0 = time.perf_counter()
    worst_rel = 0.0
    for kappa in (1.0, 10.0):
        b = solve_beta(kappa)
        for radius in (0.5, 1.0, 2.0):
            lap = frac_laplacian_radial(lambda r: r**b, radius, ALPHA)
            target = kappa * (3 + b - ALPHA) * radius ** (b - ALPHA)
            worst_rel = max(worst_rel, abs(lap + target) / target)
    dt = time.perf_counter() - t0
    ok = worst_rel <= 1e-3 and dt < 60
    record(acceptance_log, 4, ok, f"max relative residual {worst_rel:.1e}, {dt:.1f}s")
    assert ok


def test_criterion_05_sampler(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(50)
    z = sample_stable_increment(3, ALPHA, 1.0, 1_000_000, rng)
    u = np.array([0.48, -0.6, 0.64])
    worst_z = 0.0
    for k in (0.3, 0.7, 1.0, 1.5, 2.2):
        phase = z @ (k * u)
        c, s = np.cos(phase), np.sin(phase)
        se_c, se_s = c.std() / 1000, s.std() / 1000
        worst_z = max(worst_z, abs(c.mean() - math.exp(-k**ALPHA)) / se_c, abs(s.mean()) / se_s)
    radius = np.linalg.norm(z, axis=1)
    edges = np.concatenate([[0.0], np.geomspace(0.2, 20, 40), [np.inf]])
    cdf = np.concatenate([[0.0], get_table(ALPHA).radial_cdf(edges[1:-1]), [1.0]])
    p = stats.chisquare(np.histogram(radius, edges)[0], np.diff(cdf) * radius.size).pvalue
    dt = time.perf_counter() - t0
    ok = worst_z <= 4 and p > 0.001 and dt < 60
    record(acceptance_log, 5, ok, f"max ECF z {worst_z:.2f}, chi-square p {p:.3f}, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 6-7


def test_criterion_06_free_oracle(acceptance_log):
    t0 = time.perf_counter()
    cfg = SimConfig(ModelParams(kappa=0.0), t_final=1.0, n_paths=DESK_PATHS, seed=60)
    tab = get_table(ALPHA)
    ys = np.array([[r, 0, 0] for r in (0, 0.25, 0.5, 1, 2, 3)] + [[0, 1, 1], [0, 0, 2]], float)
    worst_z = 0.0
    for x in (np.zeros(3), E1):
        f = estimate_kernel(x, ys, cfg)
        worst_z = max(worst_z, float(np.max(np.abs(f.estimate - tab.kernel(1.0, x, ys)) / f.stderr)))
    grid = Grid3D(16.0, 64)
    pde = SimConfig(ModelParams(kappa=0.0), t_final=1.0, grid=(16.0, 64))
    center, width = (0.5, -0.25, 0.0), 0.5
    u = propagate(gaussian_bump(grid, center, width), "fokker_planck", pde, grid, symbol="exact")
    ref = free_convolution_periodic(width, center, grid, 1.0, ALPHA)
    l1 = grid.integral(np.abs(u - ref)) / grid.integral(np.abs(ref))
    dt = time.perf_counter() - t0
    ok = worst_z <= 3 and l1 <= 1e-3 and dt < 300
    record(acceptance_log, 6, ok, f"MC max |z| {worst_z:.2f}, PDE relative L1 {l1:.1e}, {dt:.0f}s")
    assert ok


def test_criterion_07_conservation(acceptance_log):
    _, pde = default_configs(kappa=KAPPA)
    grid = Grid3D(*pde.grid)
    f0 = gaussian_bump(grid, (0.5, -0.25, 0.0), 0.5)
    u = propagate(f0, "fokker_planck", pde, grid)
    m0 = grid.integral(f0)
    mass = abs(grid.integral(u) - m0) / m0 / pde.t_final
    rep = contraction_and_ultracontractivity_check(pde, grid, t_final=1.0, t_window=(0.1, 1.0))
    linf = [rep["initial"]["linf"]] + [s_["linf"] for s_ in rep["slices"]]
    monotone = all(b <= a * (1 + 1e-12) for a, b in zip(linf, linf[1:]))
    floor = min(min(s_["min"] for s_ in rep["slices"]), float(u.min()) / f0.max())
    ok = mass <= 1e-6 and monotone and floor >= -1e-10
    record(acceptance_log, 7, ok,
           f"mass drift {mass:.1e}/unit time, max-norm nonincreasing={monotone}, min {floor:.1e}")
    assert ok


# ---------------------------------------------------------------- 8-10


@pytest.fixture(scope="module")
def desk_fields():
    mc, _ = default_configs(kappa=KAPPA, n_paths=DESK_PATHS)
    t0 = time.perf_counter()
    base = two_sided_design(mc)
    refined = two_sided_design(mc.with_(n_paths=2 * mc.n_paths))
    return mc, base, refined, time.perf_counter() - t0


def test_criterion_08_two_sided(acceptance_log, desk_fields):
    mc, base, refined, dt = desk_fields
    rep = verify_two_sided(base, mc.params.weights, refined, ALPHA)
    sup, inf, slope = rep.parts
    ok = all(p.verdict == "pass" for p in rep.parts) and dt < 1200
    record(acceptance_log, 8, ok,
           f"sup {sup.value:.3g} (drift {sup.trend:.1%}), inf {inf.value:.3g} "
           f"(drift {inf.trend:.1%}), slope {slope.value:.3f}+-{slope.stderr:.3f} "
           f"vs beta {slope.details['beta']:.3f}, {dt:.0f}s")
    assert ok, rep.to_text()


@pytest.mark.xfail(strict=True, reason="at kappa=5 the far-field ratio is still about 3 at "
                   "D=20; the outward drift shift decays only like D^(1-alpha)")
def test_criterion_09_far_field(acceptance_log, desk_fields):
    mc, base, refined, _ = desk_fields
    far_cfg = mc.with_(n_paths=FAR_PATHS)
    far = far_field_design(far_cfg)
    far_ref = far_field_design(far_cfg.with_(n_paths=2 * FAR_PATHS))
    rep = verify_standard_ub(KernelField.concat([base, far]), KernelField.concat([refined, far_ref]),
                             ALPHA)
    det = rep.parts[1].details
    sups = ", ".join(f"{v:.3g}" for v in det["sup"])
    ok = rep.parts[1].verdict == "pass"
    record(acceptance_log, 9, ok,
           f"sup ratio at D=2,5,10,20: {sups}; monotone={det['monotone']}, limit 1.25")
    assert ok


def test_criterion_10_desingularizing(acceptance_log):
    mc, _ = default_configs(kappa=KAPPA, n_paths=DESK_PATHS)
    t0 = time.perf_counter()
    rep = verify_desingularizing_l1(E1, 1.0, mc, n_particles=int(ADJOINT_SHARE * DESK_PATHS))
    dt = time.perf_counter() - t0
    weighted, unweighted, slope = rep.parts
    ok = weighted.verdict == "pass" and unweighted.verdict == "pass"
    record(acceptance_log, 10, ok,
           f"weighted sup {weighted.value:.3g} (drift {weighted.trend:.1%}), unweighted sup "
           f"{unweighted.value:.3g} (drift {unweighted.trend:.1%}), down to |x|=0.05s; "
           f"mass slope {slope.value:.3f} ({slope.verdict}), {dt:.0f}s")
    assert ok, rep.to_text()


# ---------------------------------------------------------------- 11-12


def test_criterion_11_appendix(acceptance_log):
    t0 = time.perf_counter()
    suite = ap.lemma_suite(n=100_000, seed=0)
    viol = sum(suite["violations"].values())
    k2 = abs(kappa_r(2.0) - 1.0)
    e, M = ap.extrapolation_constant(ap.ExtrapolationInput(1, 2, 4, 1))
    dt = time.perf_counter() - t0
    ok = viol == 0 and k2 <= 1e-12 and M == 512 and dt < 10
    record(acceptance_log, 11, ok, f"violations {viol} in 1e5 draws, |kappa(2)-1|={k2:.0e}, "
           f"M={M}, {dt:.1f}s")
    assert ok


def _read_all(d):
    return {n: open(os.path.join(d, n), "rb").read() for n in sorted(os.listdir(d))}


def test_criterion_12_reproducibility(acceptance_log, tmp_path):
    cfg = {"schema_version": 1, "model": {"kappa": KAPPA}, "backend": "mc",
           "sim": {"t_final": 1.0, "n_paths": 50_000},
           "design": {"x": [[1.0, 0, 0], [0, 0.5, 0]], "y": [[1.0, 0, 0], [2.0, 1.0, 0]]},
           "seed": 12}
    runs = {}
    for backend in ("mc", "adjoint"):
        cfg["backend"] = backend
        path = tmp_path / f"{backend}.json"
        path.write_text(json.dumps(cfg))
        for threads in (1, 4):
            out = str(tmp_path / f"{backend}-{threads}")
            main(["simulate", "--config", str(path), "--out", out, "--threads", str(threads)])
            runs[backend, threads] = _read_all(out)
    cfg["backend"] = "mc"
    vpath = tmp_path / "verify.json"
    cfg["sim"]["n_paths"] = 20_000
    vpath.write_text(json.dumps(cfg))
    for threads in (1, 4):
        out = str(tmp_path / f"verify-{threads}")
        main(["verify", "--config", str(vpath), "--theorems", "desingularizing_l1",
              "--out", out, "--threads", str(threads), "--no-plots"])
        runs["verify", threads] = _read_all(out)
    same = {k: runs[k, 1] == runs[k, 4] for k in ("mc", "adjoint", "verify")}
    n_files = sum(len(runs[k, 1]) for k in ("mc", "adjoint", "verify"))
    ok = all(same.values())
    record(acceptance_log, 12, ok, f"byte-identical at 1 vs 4 threads: {same} ({n_files} files)")
    assert ok
