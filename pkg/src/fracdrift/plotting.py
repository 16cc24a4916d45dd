"""Figures written next to the CLI's CSV/JSON outputs.

Everything renders off-screen with the Agg backend; each function takes
plain arrays or reports and a target path and returns the path.
"""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1) / 2
WIDTH = 4.8

STYLE = {
    "figure.figsize": (WIDTH, WIDTH * GOLDEN),
    "figure.dpi": 150,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.linewidth": 0.6,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "mathtext.fontset": "stix",
    "figure.subplot.left": 0.15,
    "figure.subplot.bottom": 0.17,
    "figure.subplot.right": 0.96,
    "figure.subplot.top": 0.93,
    # fixed metadata keeps repeated renders byte-identical
    "svg.hashsalt": "fracdrift",
}

COLORS = ("#1b4f72", "#c0392b", "#239b56", "#7d3c98", "#b9770e")


def _figure():
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
    return fig, ax


def _save(fig, path):
    with plt.rc_context(STYLE):
        fig.savefig(path, metadata={"Software": None} if path.endswith(".png") else None)
    plt.close(fig)
    return path


def beta_curve(kappas, betas, alpha, path):
    fig, ax = _figure()
    ax.semilogx(kappas, betas, color=COLORS[0])
    ax.axhline(alpha, color="0.5", lw=0.6, ls="--")
    ax.set_xlabel(r"drift strength $\kappa$")
    ax.set_ylabel(r"weight exponent $\beta$")
    ax.set_ylim(0, alpha * 1.05)
    return _save(fig, path)


def kernel_profile(radii, p1, alpha, d, path):
    """Log-log profile of the unit-time density and its tail-compensated form."""
    fig, ax = _figure()
    radii, p1 = np.asarray(radii), np.asarray(p1)
    ax.loglog(radii, p1, color=COLORS[0], label=r"$p_1(r)$")
    ax.loglog(radii, p1 * radii ** (d + alpha), color=COLORS[1], label=r"$r^{d+\alpha}p_1(r)$")
    ax.set_xlabel("radius")
    ax.legend()
    return _save(fig, path)


def ratio_vs_radius(ry, rho, rho_err, slope, beta, path, label="small-|y| series"):
    """Kernel ratio against |y| in natural units, with a fitted power law."""
    fig, ax = _figure()
    ry, rho, rho_err = map(np.asarray, (ry, rho, rho_err))
    ax.errorbar(ry, rho, yerr=rho_err, fmt="o", color=COLORS[0], ms=3, label=label)
    if np.isfinite(slope) and ry.size:
        grid = np.geomspace(ry.min(), ry.max(), 50)
        anchor = np.exp(np.mean(np.log(rho) - slope * np.log(ry)))
        ax.loglog(grid, anchor * grid**slope, color=COLORS[1], label=f"slope {slope:.3f}")
        ax.loglog(grid, anchor * grid**beta * np.exp(np.mean((slope - beta) * np.log(ry))),
                  color="0.5", ls="--", label=rf"$\beta$ = {beta:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$|y|\,/\,t^{1/\alpha}$")
    ax.set_ylabel("estimate / free kernel")
    ax.legend()
    return _save(fig, path)


def far_field(D, sups, tolerance, path):
    fig, ax = _figure()
    ax.plot(D, sups, "o-", color=COLORS[0], label="sup ratio")
    ax.axhline(tolerance, color=COLORS[1], ls="--", lw=0.8, label="tolerance")
    ax.axhline(1.0, color="0.5", lw=0.6)
    ax.set_xscale("log")
    ax.set_xlabel(r"$D$ in $|x| > D\,t^{1/\alpha}$")
    ax.set_ylabel("sup estimate / free kernel")
    ax.legend()
    return _save(fig, path)


def desingularizing(radii, weighted, unweighted, path):
    fig, ax = _figure()
    ax.semilogx(radii, weighted, "o-", color=COLORS[0], label="weighted mass / weight")
    ax.semilogx(radii, unweighted, "s-", color=COLORS[2], label="mass / weight")
    ax.set_xlabel(r"$|x|\,/\,t^{1/\alpha}$")
    ax.set_ylabel("ratio")
    ax.set_ylim(bottom=0)
    ax.legend()
    return _save(fig, path)


def report_figures(reports, out_dir):
    """Render the figures that a set of BoundReports supports."""
    import os

    paths = []
    far = reports.get("standard_upper")
    if far is not None and len(far.parts) > 1:
        det = far.parts[1].details
        sups = [float(v) if isinstance(v, (int, float)) else math.nan for v in det["sup"]]
        paths.append(far_field(det["D"], sups, det["tolerance"],
                               os.path.join(out_dir, "far_field.png")))
    des = reports.get("desingularizing_l1")
    if des is not None:
        d0, d1 = des.parts[0].details, des.parts[1].details
        paths.append(desingularizing(d0["radii"], d0["ratios"], d1["ratios"],
                                     os.path.join(out_dir, "desingularizing.png")))
    two = reports.get("two_sided")
    if two is not None and "series" in two.details:
        s = two.details["series"]
        slope = two.parts[2]
        paths.append(ratio_vs_radius(s["ry"], s["rho"], s["err"], slope.value,
                                     slope.details["beta"],
                                     os.path.join(out_dir, "two_sided_slope.png")))
    return paths
