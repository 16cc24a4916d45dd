"""Command-line entry point: ``fracdrift {beta,kernel,simulate,verify,props}``.

Every run writes its outputs plus ``manifest.json`` (config hash, seed,
library versions, output checksums) into the output directory.  Exit codes:
0 pass, 1 fail, 2 inconclusive, 64 usage or configuration error.
"""

import argparse
import hashlib
import json
import logging
import os
import platform
import sys

import numpy as np

from . import __version__
from .model import ConfigError, ModelParams, kappa_of_beta, solve_beta
from .simulator import (
    THREADS_ENV,
    Grid3D,
    KernelField,
    SimConfig,
    _atomic_write_text,
    estimate_kernel,
    estimate_kernel_adjoint,
    euler_paths,
    gaussian_bump,
    propagate,
)
from .specfun import DomainError, kappa_r_many

log = logging.getLogger("fracdrift")

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 64
SCHEMA_VERSION = 1
_VERDICT_EXIT = {"pass": EXIT_PASS, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- config


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_config(path):
    """Read and validate an experiment config; returns (raw dict, SimConfig)."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return raw, config_from_dict(raw)


def config_from_dict(raw):
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {raw.get('schema_version')}")
    known = {"schema_version", "model", "backend", "sim", "design", "output_dir", "seed"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    m = raw.get("model", {})
    sim = dict(raw.get("sim", {}))
    eps = sim.pop("eps", 1e-6 if m.get("kappa", 1.0) > 0 else 0.0)
    params = ModelParams(int(m.get("d", 3)), float(m.get("alpha", 1.5)),
                         float(m.get("kappa", 1.0)), float(eps))
    allowed = {"t_final", "n_paths", "dt", "eps_schedule", "grid", "c_cfl", "threads"}
    bad = set(sim) - allowed
    if bad:
        raise ConfigError(f"unknown sim keys: {sorted(bad)}")
    if "grid" in sim:
        sim["grid"] = (float(sim["grid"][0]), int(sim["grid"][1]))
    if "eps_schedule" in sim:
        sim["eps_schedule"] = tuple(float(e) for e in sim["eps_schedule"])
    sim.setdefault("t_final", 1.0)
    cfg = SimConfig(params, seed=int(raw.get("seed", 0)), **sim)
    if raw.get("backend", "mc") not in ("mc", "adjoint", "pde"):
        raise ConfigError("backend must be one of mc, adjoint, pde")
    if cfg.params.d != 3:
        raise ConfigError("the simulators are three-dimensional")
    Grid3D(*cfg.grid)
    _design(raw, cfg)
    return cfg


def _design(raw, cfg):
    s = cfg.t_final ** (1 / cfg.params.alpha)
    des = raw.get("design", {})
    xs = np.array(des.get("x", [[s, 0.0, 0.0]]), float)
    ys = np.array(des.get("y", [[r * s * u for u in (1.0, 0.0, 0.0)] for r in (0.0, 0.5, 1, 2)]
                           + [[0.0, r * s, 0.0] for r in (0.5, 1, 2)]), float)
    if xs.ndim != 2 or xs.shape[1] != 3 or ys.ndim != 2 or ys.shape[1] != 3:
        raise ConfigError("design points must be lists of 3-vectors")
    return xs, ys


def _versions():
    import matplotlib
    import scipy

    return {"fracdrift": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__}


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command, config, seed, outputs):
    manifest = {
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(_canonical(config).encode()).hexdigest(),
        "seed": seed,
        "versions": _versions(),
        "outputs": {os.path.basename(p): _sha256(p) for p in sorted(outputs)},
    }
    path = os.path.join(out_dir, "manifest.json")
    _atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _csv(path, header, rows):
    lines = [",".join(header)] + [",".join(_cell(v) for v in row) for row in rows]
    _atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------- subcommands


def _kappa_grid(spec):
    try:
        parts = [float(p) for p in spec.split(":")]
    except ValueError as exc:
        raise UsageError(f"bad --kappa-grid {spec!r}") from exc
    if len(parts) == 1:
        return np.array(parts)
    if len(parts) != 3 or parts[0] <= 0 or parts[1] < parts[0] or parts[2] < 1:
        raise UsageError("--kappa-grid takes lo:hi:n with 0 < lo <= hi and n >= 1")
    return np.geomspace(parts[0], parts[1], int(parts[2]))


def cmd_beta(args):
    kappas = _kappa_grid(args.kappa_grid)
    if not 1 < args.alpha < 2 or args.d < 2:
        raise UsageError("need d >= 2 and 1 < alpha < 2")
    rows = []
    for k in kappas:
        try:
            b = solve_beta(float(k), args.d, args.alpha)
        except DomainError as exc:
            raise UsageError(str(exc)) from exc
        back = kappa_of_beta(b, args.d, args.alpha)
        rows.append((float(k), b, back, abs(back - k) / k))
    betas = np.array([r[1] for r in rows])
    monotone = bool(np.all(np.diff(betas) > 0)) if len(rows) > 1 else True
    rows = [r + (monotone,) for r in rows]
    os.makedirs(args.out, exist_ok=True)
    outputs = [_csv(os.path.join(args.out, "beta.csv"),
                    ["kappa", "beta", "kappa_roundtrip", "rel_roundtrip_error", "monotone"], rows)]
    if not args.no_plots and len(rows) > 1:
        from . import plotting

        outputs.append(plotting.beta_curve(kappas, betas, args.alpha,
                                           os.path.join(args.out, "beta.png")))
    write_manifest(args.out, "beta", {"d": args.d, "alpha": args.alpha,
                                      "kappa_grid": args.kappa_grid}, None, outputs)
    ok = monotone and max(r[3] for r in rows) <= 1e-8
    print(f"beta: {len(rows)} rows, monotone={monotone}, "
          f"max roundtrip error={max(r[3] for r in rows):.2e}")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_kernel(args):
    from .stable_kernel import StableKernelTable, estimate_k0

    if args.d != 3:
        raise UsageError("the tabulated kernel is three-dimensional")
    if not 0 < args.alpha <= 2:
        raise UsageError("need 0 < alpha <= 2")
    tab = StableKernelTable.build(args.alpha)
    os.makedirs(args.out, exist_ok=True)
    table_path = args.table_out or os.path.join(args.out, "p1_table.csv")
    tab.to_csv(table_path)
    outputs = [table_path]
    summary = {"alpha": args.alpha, "d": args.d, "normalization": tab.normalization(),
               "p1_at_zero": float(tab.p1(0.0))}
    if args.alpha < 2:
        k0 = estimate_k0(args.alpha)
        summary["k0"] = k0.as_dict()
    path = os.path.join(args.out, "kernel.json")
    _atomic_write_text(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs.append(path)
    if not args.no_plots:
        from . import plotting

        r = np.geomspace(1e-2, 1e3, 300)
        outputs.append(plotting.kernel_profile(r, tab.p1(r), args.alpha, args.d,
                                               os.path.join(args.out, "kernel.png")))
    write_manifest(args.out, "kernel", {"d": args.d, "alpha": args.alpha}, None, outputs)
    print(json.dumps(summary, sort_keys=True))
    ok = abs(summary["normalization"] - 1) <= 1e-6
    return EXIT_PASS if ok else EXIT_FAIL


def simulate(raw, cfg):
    """Run the configured backend over the design; returns {eps: KernelField}."""
    backend = raw.get("backend", "mc")
    xs, ys = _design(raw, cfg)
    schedule = cfg.eps_schedule or (cfg.params.eps,)
    out = {}
    for eps in schedule:
        c = cfg.with_(params=cfg.params.with_eps(eps))
        if backend == "mc":
            parts = [estimate_kernel(x, ys, c, endpoints=euler_paths(x, c)) for x in xs]
        elif backend == "adjoint":
            parts = [estimate_kernel_adjoint(xs, y, c) for y in ys]
        else:
            parts = [_pde_field(x, ys, c) for x in xs]
        out[eps] = KernelField.concat(parts)
    return out


def _pde_field(x, ys, cfg):
    grid = Grid3D(*cfg.grid)
    f0 = gaussian_bump(grid, x, grid.dx)
    u = propagate(f0, "fokker_planck", cfg, grid)
    from .verifier import _grid_interp

    vals = np.maximum(_grid_interp(grid, u, ys), 0.0)
    n = len(ys)
    return KernelField(np.full(n, cfg.t_final), np.tile(x, (n, 1)), ys, vals, np.zeros(n), "PDE",
                       {"grid": list(cfg.grid), "bump_width": grid.dx})


def cmd_simulate(args):
    raw, cfg = load_config(args.config)
    if args.threads:
        cfg = cfg.with_(threads=args.threads)
    out_dir = args.out or raw.get("output_dir", "out")
    os.makedirs(out_dir, exist_ok=True)
    fields = simulate(raw, cfg)
    outputs = []
    multi = len(fields) > 1
    for eps, f in fields.items():
        name = f"field_eps{eps:.3g}.csv" if multi else "field.csv"
        path = os.path.join(out_dir, name)
        f.to_csv(path)
        outputs.append(path)
    write_manifest(out_dir, "simulate", raw, cfg.seed, outputs)
    n_incon = sum(int(f.inconclusive.sum()) for f in fields.values())
    print(f"simulate: {sum(len(f) for f in fields.values())} points, {n_incon} inconclusive")
    return EXIT_PASS if n_incon == 0 else EXIT_INCONCLUSIVE


def cmd_verify(args):
    from . import verifier

    theorems = tuple(t for t in args.theorems.split(",") if t) if args.theorems \
        else verifier.THEOREMS
    unknown = [t for t in theorems if t not in verifier.THEOREMS]
    if unknown:
        raise UsageError(f"unknown theorem ids {unknown}; choose from {list(verifier.THEOREMS)}")
    if args.config:
        raw, cfg = load_config(args.config)
    else:
        raw, cfg = {"model": {"kappa": 5.0}}, None
    kappa = cfg.params.kappa if cfg else 5.0
    n = cfg.n_paths if cfg else 1_000_000
    t = cfg.t_final if cfg else 1.0
    seed = cfg.seed if cfg else 0
    mc, pde = verifier.default_configs(kappa=kappa, t=t, n_paths=n, seed=seed)
    if cfg is not None:
        mc = mc.with_(params=cfg.params, dt=cfg.dt, c_cfl=cfg.c_cfl, threads=cfg.threads)
        pde = pde.with_(grid=cfg.grid, dt=cfg.dt,
                        params=cfg.params.with_eps((cfg.grid[0] / cfg.grid[1]) ** 2))
    if args.threads:
        mc, pde = mc.with_(threads=args.threads), pde.with_(threads=args.threads)
    out_dir = args.out or raw.get("output_dir", "out")
    os.makedirs(out_dir, exist_ok=True)
    reports = verifier.run_suite(mc, pde, theorems, log=log.info)
    outputs = verifier.write_reports(reports.values(), out_dir)
    outputs += [p[:-5] + ".txt" for p in outputs]
    if not args.no_plots:
        from . import plotting

        outputs += plotting.report_figures(reports, out_dir)
    write_manifest(out_dir, "verify", {"config": raw, "theorems": list(theorems)}, seed, outputs)
    for rep in reports.values():
        print(rep.to_text())
    verdict = verifier.worst([r.verdict for r in reports.values()])
    print(f"verify: overall verdict {verdict}")
    return _VERDICT_EXIT[verdict]


def cmd_props(args):
    from . import appendix_props as ap

    suite = ap.lemma_suite(n=args.n, seed=args.seed)
    r_tab = np.array([1.25, 1.5, 2.0, 3.0, 4.0, 8.0, 16.0])
    kap = kappa_r_many(r_tab, n_grid=10_000)
    e, M = ap.extrapolation_constant(ap.ExtrapolationInput(1, 2, 4, 1))
    nash = ap.nash_constants(ModelParams(kappa=5.0), 1.0, 1.0)
    result = {
        "lemma": suite,
        "kappa_role_violations": ap.kappa_role_check(seed=args.seed + 1),
        "kappa_table": {str(r): float(k) for r, k in zip(r_tab, kap)},
        "extrapolation_example": {"interp_exponent": str(e), "M": str(M)},
        "nash": {k: v for k, v in nash.items() if k != "chain"},
    }
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "props.json")
    from .verifier import _jsonable

    _atomic_write_text(path, json.dumps(_jsonable(result), indent=2, sort_keys=True) + "\n")
    table = os.path.join(args.out, "kappa_table.csv")
    _csv(table, ["r", "kappa_r"], zip(r_tab, kap))
    write_manifest(args.out, "props", {"n": args.n, "seed": args.seed}, args.seed, [path, table])
    total = sum(suite["violations"].values()) + result["kappa_role_violations"]
    print(f"props: {suite['n']} draws, {total} violations, M={M}")
    for r, k in zip(r_tab, kap):
        print(f"  kappa({r:g}) = {k:.12f}")
    return EXIT_PASS if total == 0 and M == 512 else EXIT_FAIL


# ---------------------------------------------------------------- parser


def build_parser():
    p = _Parser(prog="fracdrift", description="Kernel experiments for stable processes "
                "with a critical radial drift.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("beta", help="exponent curve kappa -> beta")
    b.add_argument("--d", type=int, default=3)
    b.add_argument("--alpha", type=float, default=1.5)
    b.add_argument("--kappa-grid", default="1e-3:1e3:61", help="lo:hi:n (log spaced) or one value")
    b.add_argument("--out", default="out/beta")
    b.add_argument("--no-plots", action="store_true")
    b.set_defaults(func=cmd_beta)

    k = sub.add_parser("kernel", help="tabulate the unit-time stable density")
    k.add_argument("--d", type=int, default=3)
    k.add_argument("--alpha", type=float, default=1.5)
    k.add_argument("--table-out", default=None)
    k.add_argument("--out", default="out/kernel")
    k.add_argument("--no-plots", action="store_true")
    k.set_defaults(func=cmd_kernel)

    s = sub.add_parser("simulate", help="estimate kernel values on a design")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--threads", type=int, default=None, help=f"overrides ${THREADS_ENV}")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run bound experiments and write reports")
    v.add_argument("--config", default=None)
    v.add_argument("--theorems", default=None, help="comma separated ids")
    v.add_argument("--out", default=None)
    v.add_argument("--threads", type=int, default=None)
    v.add_argument("--no-plots", action="store_true")
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("props", help="scalar inequality suite and constants")
    a.add_argument("--n", type=int, default=100_000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default="out/props")
    a.set_defaults(func=cmd_props)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"fracdrift: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
