"""Figures for the ``report`` subcommand, rendered off-screen to PNG files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
    "axes.grid": True,
    "grid.linestyle": "--",
    "grid.alpha": 0.6,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
}


def _save(fig, path: Path) -> Path:
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_estimates(report, out_dir) -> Path:
    """Monitored bounds against time: sup|u|, sup|u-dot|, volume ratio, trace ratio."""
    out_dir = Path(out_dir)
    t = report.series("t")
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, sharex=True)
        ax = axes[0, 0]
        ax.plot(t, report.series("sup_u"), marker="o", label="sup |u|")
        ax.plot(t, report.series("sup_udot"), marker="s", label="sup |u-dot|")
        ax.legend()
        ax = axes[0, 1]
        ax.fill_between(t, report.series("vol_ratio_min"), report.series("vol_ratio_max"), alpha=0.3)
        ax.plot(t, report.series("vol_ratio_min"), color="C0")
        ax.plot(t, report.series("vol_ratio_max"), color="C0")
        ax.set_title("volume ratio range")
        ax = axes[1, 0]
        ax.plot(t, report.series("trace_ratio"), marker="o", color="C2")
        ax.set_title("sup tr / (sup |grad u|^2 + 1)")
        ax.set_xlabel("t")
        ax = axes[1, 1]
        ax.plot(t, report.series("min_eig"), marker="o", color="C3", label="min eig")
        ax.plot(t, report.series("theta_min_eig"), marker="^", color="C4", label="min eig Theta")
        ax.legend()
        ax.set_xlabel("t")
        return _save(fig, out_dir / "estimates.png")


def plot_residuals(report, out_dir) -> Path:
    """Identity residuals on a log scale."""
    out_dir = Path(out_dir)
    t = report.series("t")
    names = ("trace_identity", "eta_two_expr", "eta_eigen", "udot_gradient")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, name in enumerate(names):
            ax.semilogy(t, np.maximum(report.series(name), 1e-18), marker="os^v"[k], label=name)
        ax.set_xlabel("t")
        ax.set_ylabel("sup-norm residual")
        ax.legend()
        return _save(fig, out_dir / "residuals.png")


def plot_maxtime(data: dict, out_dir) -> Path:
    """Bisection probes of the class-positivity search with the final bracket."""
    out_dir = Path(out_dir)
    probes = sorted(data.get("probes", []), key=lambda p: p["t"])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if probes:
            ts = np.array([p["t"] for p in probes])
            lam = np.array([p["lam"] for p in probes])
            ok = np.array([p["feasible"] for p in probes], dtype=bool)
            ax.plot(ts, lam, color="0.6", zorder=1)
            ax.scatter(ts[ok], lam[ok], color="C2", label="certified", zorder=2)
            ax.scatter(ts[~ok], lam[~ok], color="C3", marker="x", label="not certified", zorder=2)
        ax.axhline(0.0, color="k", lw=0.8)
        if data.get("T_hi") is not None:
            ax.axvspan(data["T_lo"], data["T_hi"], color="C0", alpha=0.2, label="T bracket")
        if data.get("t_sing") is not None:
            ax.axvline(data["t_sing"], color="C1", ls=":", label="flow singular time")
        ax.set_xlabel("t")
        ax.set_ylabel("best min eigenvalue")
        ax.legend()
        return _save(fig, out_dir / "maxtime.png")
