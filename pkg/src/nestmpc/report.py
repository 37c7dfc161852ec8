"""Figure rendering for simulation traces.

Renders static matplotlib figures to files next to the CSV output:
state trajectories against their boxes, applied inputs, and the cost
bookkeeping per subsystem.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .coordinator import Trace
from .model import SubsystemModel


def _by_subsystem(trace: Trace, ids):
    sub_col = trace.column("subsystem")
    t_col = trace.column("t")
    out = {}
    for i in ids:
        mask = [k for k, s in enumerate(sub_col) if s == i]
        out[i] = ([t_col[k] for k in mask], mask)
    return out


def render_figures(trace: Trace, models: dict[int, SubsystemModel], outdir) -> list[str]:
    os.makedirs(outdir, exist_ok=True)
    ids = sorted(models)
    groups = _by_subsystem(trace, ids)
    written = []

    def col(name, mask):
        vals = trace.column(name)
        return np.array([float(vals[k]) for k in mask])

    fig, axes = plt.subplots(len(ids), 2, figsize=(9, 2.2 * len(ids)),
                             sharex=True, squeeze=False)
    for row, i in enumerate(ids):
        t, mask = groups[i]
        m = models[i]
        for d in range(m.n):
            ax = axes[row][min(d, 1)]
            ax.plot(t, col(f"x{d}", mask), label=f"x{d}")
            ax.axhline(m.X.hi[d], color="r", ls="--", lw=0.8)
            ax.axhline(m.X.lo[d], color="r", ls="--", lw=0.8)
            ax.set_ylabel(f"sub {i}")
            ax.legend(loc="upper right", fontsize=7)
    axes[-1][0].set_xlabel("round")
    axes[-1][1].set_xlabel("round")
    fig.suptitle("state trajectories and bounds")
    path = os.path.join(outdir, "states.png")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(8, 4))
    for i in ids:
        t, mask = groups[i]
        ax.plot(t, col("u0", mask), label=f"u (sub {i})")
        ax.axhline(models[i].U.hi[0], color="r", ls="--", lw=0.6)
        ax.axhline(models[i].U.lo[0], color="r", ls="--", lw=0.6)
    ax.set_xlabel("round")
    ax.set_ylabel("input")
    ax.legend(fontsize=8)
    fig.suptitle("applied inputs")
    path = os.path.join(outdir, "inputs.png")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(8, 4))
    for i in ids:
        t, mask = groups[i]
        v = col("V_main", mask)
        ax.semilogy(t, np.maximum(v, 1e-16), label=f"V_main (sub {i})")
    ax.set_xlabel("round")
    ax.set_ylabel("nominal cost")
    ax.legend(fontsize=8)
    fig.suptitle("nominal cost decrease")
    path = os.path.join(outdir, "costs.png")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)
    return written
