"""Line charts of sweep results.

One curve per number of periods ``n`` (blue, red, green, black for
``n = 1..4``), one panel per value of the sweep's panel variable.  Output is
SVG written with a fixed hash salt and no timestamp so identical inputs give
identical bytes.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..errors import InputError  # noqa: E402

__all__ = ["SERIES_COLORS", "METRICS", "render_plot", "plot_style"]

SERIES_COLORS = {1: "blue", 2: "red", 3: "green", 4: "black"}
_FALLBACK_COLORS = ("tab:orange", "tab:purple", "tab:brown", "tab:gray")

METRICS = {
    "success_rate": "successful stabilizations (%)",
    "err_median": "median estimation error",
    "err_mean": "mean estimation error",
    "abscissa_median": "median true closed-loop abscissa",
    "sampled_abscissa_median": "median sampled closed-loop abscissa",
}

AXIS_LABELS = {
    "tau": r"stabilization time $\tau$",
    "sigma_L": r"$\sigma_L$",
    "sigma_eta": r"$\sigma_\eta$",
    "r": r"$r$ ($R = rI$)",
    "n": r"periods $n$",
}

plot_style = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.4,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "bayestab",
    "svg.fonttype": "path",
}


def _panel_variable(results, variable):
    candidates = [v for v in ("tau", "sigma_L", "sigma_eta", "r")
                  if v != variable and len({res.value(v) for res in results}) > 1]
    if len(candidates) > 1:
        raise InputError(f"results vary in more than one non-swept quantity: {candidates}")
    return candidates[0] if candidates else None


def render_plot(results, metric, path):
    """Render ``metric`` against the swept variable of ``results`` to ``path``."""
    if not results:
        raise InputError("nothing to plot")
    variables = {res.variable for res in results}
    if len(variables) != 1:
        raise InputError(f"results mix sweep variables {sorted(variables)}")
    if metric not in METRICS:
        raise InputError(f"unknown metric {metric!r}")
    variable = variables.pop()
    panel_var = _panel_variable(results, variable)
    panels = sorted({res.value(panel_var) for res in results}) if panel_var else [None]
    scale = 100.0 if metric == "success_rate" else 1.0

    ncols = 2 if len(panels) > 1 else 1
    nrows = int(np.ceil(len(panels) / ncols))
    with plt.rc_context(plot_style):
        fig, axes = plt.subplots(nrows, ncols, figsize=(3.4 * ncols, 2.6 * nrows),
                                 squeeze=False, sharex=True)
        for idx, panel in enumerate(panels):
            ax = axes.flat[idx]
            members = [res for res in results
                       if panel_var is None or res.value(panel_var) == panel]
            for n in sorted({res.n for res in members}):
                series = sorted((res for res in members if res.n == n),
                                key=lambda res: res.value(variable))
                x = [res.value(variable) for res in series]
                y = [scale * getattr(res, metric) for res in series]
                color = SERIES_COLORS.get(n, _FALLBACK_COLORS[n % len(_FALLBACK_COLORS)])
                ax.plot(x, y, color=color, label=f"n={n}", gid=f"series-p{idx}-n{n}")
            if variable == "r":
                ax.set_xscale("log")
            if panel_var is not None:
                ax.set_title(f"{AXIS_LABELS[panel_var]} = {panel:g}")
            ax.set_xlabel(AXIS_LABELS[variable])
            ax.set_ylabel(METRICS[metric])
            if metric == "success_rate":
                ax.set_ylim(-2, 102)
        for ax in list(axes.flat)[len(panels):]:
            ax.set_visible(False)
        axes.flat[0].legend(loc="best", frameon=False)
        fig.tight_layout()
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
