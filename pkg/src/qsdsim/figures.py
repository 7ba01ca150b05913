"""Optional matplotlib rendering for the CLI's report paths.

One PNG per call; the delimited output stays the primary artifact.  Uses the
Agg backend so headless runs never touch a display.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_POP_LABELS = (r"$\rho_{11}$", r"$\rho_{22}$", r"$\rho_{33}$", r"$\rho_{44}$")


def render_timeseries(grid, rhos, concurrence, out_path: str, title: str) -> None:
    """Populations + concurrence panels for ensemble/master/analytic runs."""
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    rhos = np.asarray(rhos)
    for k in range(4):
        ax0.plot(grid, rhos[:, k, k].real, label=_POP_LABELS[k])
    ax0.set_ylabel("population")
    ax0.legend(loc="best", fontsize=9)
    ax0.set_title(title)
    ax1.plot(grid, concurrence, color="C3")
    ax1.set_xlabel("t")
    ax1.set_ylabel("concurrence")
    ax1.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_sweep(rows, out_path: str, title: str) -> None:
    """Concurrence curves grouped by parameter point.

    rows: iterable of (gamma, delta, t, concurrence, fidelity)."""
    groups: dict = {}
    for gamma, delta, t, c, _f in rows:
        groups.setdefault((gamma, delta), ([], []))
        groups[(gamma, delta)][0].append(t)
        groups[(gamma, delta)][1].append(c)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (gamma, delta), (ts, cs) in sorted(groups.items()):
        ax.plot(ts, cs, label=rf"$\gamma={gamma:g},\ \Delta={delta:g}$")
    ax.set_xlabel("t")
    ax.set_ylabel("concurrence")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_fidelity(grid, fid, lo, hi, out_path: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.fill_between(grid, lo, hi, alpha=0.3, color="C0", label="perturbation band")
    ax.plot(grid, fid, color="C0")
    ax.set_xlabel("t")
    ax.set_ylabel("fidelity")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
