"""Figure rendering for the report-producing commands.

Each renderer takes the already-computed rows/report and writes one PNG
next to the delimited output.  matplotlib is imported lazily with the
Agg backend so headless runs and --no-figures stay cheap.
"""

from __future__ import annotations


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


REGION_COLORS = {"Case1": "#4878cf", "Case2Interior": "#d65f5f",
                 "Case2Boundary": "#222222"}


def render_region_map(rows, path, N):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    for case, color in REGION_COLORS.items():
        xs = [r["a"] for r in rows if r["case"] == case]
        ys = [r["b"] for r in rows if r["case"] == case]
        if xs:
            ax.scatter(xs, ys, s=1.2, c=color, label=case, rasterized=True)
    ax.set_xlabel("a")
    ax.set_ylabel("b")
    ax.set_title(f"admissible strip partition, N={N}")
    ax.legend(markerscale=8, fontsize=8, loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
    return path


def render_asymptotics(fit_dict, path):
    plt = _plt()
    eps = fit_dict["eps_list"]
    vals = [abs(v) for v in fit_dict["values"]]
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.loglog(eps, vals, "o", label="quadrature")
    # fitted line through the first point
    s = fit_dict["fitted_slope_plain"]
    ref = [vals[0] * (e / eps[0]) ** s for e in eps]
    ax.loglog(eps, ref, "-", lw=1,
              label=f"slope {s:.3f} (predicted {fit_dict['predicted_exponent']:.3f})")
    ax.set_xlabel("eps")
    ax.set_ylabel(fit_dict["quantity"])
    ax.legend(fontsize=8)
    ax.set_title(f"{fit_dict['quantity']}: {fit_dict['case_label']}")
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
    return path


def render_profile(r, values, path, title=""):
    plt = _plt()
    import numpy as np
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    mask = np.asarray(values) > 0
    ax.loglog(np.asarray(r)[mask], np.asarray(values)[mask], "-")
    ax.set_xlabel("r")
    ax.set_ylabel("u(r)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
    return path


def render_sweep(rows, vary, path):
    plt = _plt()
    ok = [r for r in rows if r["error"] == "" and r["energy"] != ""]
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    if ok:
        ax.plot([r["param_value"] for r in ok], [r["energy"] for r in ok], "o-")
    ax.set_xlabel(vary)
    ax.set_ylabel("energy")
    ax.set_title(f"sweep over {vary}")
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
    return path
