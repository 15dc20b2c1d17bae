"""Figures for correlation and fidelity runs, rendered to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .theory import decay_curve  # noqa: E402

# a fixed style so repeated runs render identically
STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def correlation_figure(series_by_size: dict, path, title: str, theory: float | None = None) -> Path:
    """Re C(t) for each size, plus the integrable plateau when known."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for n_sites, s in sorted(series_by_size.items()):
            ax.plot(s.times, s.values.real, ".-", ms=2, label=f"L={n_sites}")
        if theory is not None:
            ax.axhline(theory, color="k", ls="-.", lw=1, label=f"D = {theory:.6f}")
        ax.set_xlabel("t")
        ax.set_ylabel("C(t)/L")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def fidelity_figure(curves: dict, path, title: str) -> Path:
    """|F(t)| on a log scale with the predicted decay for each curve."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for (n_sites, dp), (s, doc) in sorted(curves.items()):
            line, = ax.semilogy(s.times, np.maximum(s.abs, 1e-16), label=f"L={n_sites}, d'={dp:g}")
            tau, regime = doc.get("tau"), doc.get("regime")
            if tau and regime in ("ergodic", "non_ergodic"):
                t = np.linspace(0, s.times[-1], 400)
                ax.semilogy(t, decay_curve(regime, tau, t), "-.", color=line.get_color(), lw=0.8)
            ax.axhline(doc["plateau"], color=line.get_color(), ls=":", lw=0.6)
        ax.set_ylim(1e-3, 1.2)
        ax.set_xlabel("t")
        ax.set_ylabel("|F(t)|")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def gnuplot_script(figure: str) -> str:
    """A sample gnuplot script for the CSV series of a reproduced figure."""
    if figure == "fig1":
        return (
            "set datafile separator ','\n"
            "set xlabel 't'; set ylabel 'C_M(t)/L'\n"
            "files = system('ls */corr_*_L*.csv')\n"
            "plot for [f in files] f every ::1 using 1:2 with linespoints title f\n"
        )
    return (
        "set datafile separator ','\n"
        "set logscale y; set xlabel 't'; set ylabel '|F(t)|'\n"
        "files = system('ls */fid_*_L*.csv')\n"
        "plot for [f in files] f every ::1 using 1:4 with lines title f\n"
    )
