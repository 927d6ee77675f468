"""Figure rendering for run artifacts.

Every solver artifact directory gets publication-style PNG figures next to
its delimited output: diagnostics time series, solution profiles (line in
one dimension, heat map in two), spectra and convergence tables.
"""

from __future__ import annotations

import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .partition import GridFunction
from .solvers import TrajectoryDiagnostics

__all__ = [
    "render_diagnostics",
    "render_solution",
    "render_spectrum",
    "render_convergence",
]

_RC = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path: str) -> str:
    fig.savefig(path)
    plt.close(fig)
    return path


def render_diagnostics(diag: TrajectoryDiagnostics, path: str) -> str:
    """Mass / norms / energy over time, relative to their initial values."""
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 6.0))
        t = np.asarray(diag.times)
        for name, series in (
            ("mass", diag.mass),
            ("l2", diag.l2),
            ("l3", diag.l3),
        ):
            s = np.asarray(series)
            ax1.plot(t, s, label=name)
        if any(abs(e) > 0 for e in diag.energy):
            ax1.plot(t, np.asarray(diag.energy), label="energy")
        ax1.set_ylabel("value")
        ax1.legend(loc="best", fontsize=8)

        for name, series in (("mass", diag.mass), ("energy", diag.energy)):
            s = np.asarray(series)
            if abs(s[0]) > 0:
                ax2.semilogy(
                    t, np.maximum(np.abs(s - s[0]) / abs(s[0]), 1e-18), label=f"{name} drift"
                )
        ax2.set_xlabel("t")
        ax2.set_ylabel("relative drift")
        ax2.legend(loc="best", fontsize=8)
        return _save(fig, path)


def render_solution(u: GridFunction, path: str, title: str = "") -> str:
    part = u.partition
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        if part.config.dimension == 1:
            x = part.points[:, 0]
            order = np.argsort(x)
            ax.plot(x[order], u.values[order], lw=1.0)
            ax.set_xlabel("x")
            ax.set_ylabel("u")
        else:
            sc = ax.scatter(
                part.points[:, 0],
                part.points[:, 1],
                c=u.values,
                s=6,
                cmap="viridis",
            )
            fig.colorbar(sc, ax=ax)
            ax.set_xlabel("x")
            ax.set_ylabel("y")
            ax.set_aspect("equal")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def render_spectrum(values: Sequence[float], path: str, reference=None) -> str:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        vals = np.asarray(values)
        ax.plot(np.arange(1, vals.size + 1), vals, "o", ms=4, label="computed")
        if reference is not None:
            ref = np.asarray(reference)
            ax.plot(np.arange(1, ref.size + 1), ref, "x", ms=6, label="reference")
        ax.set_xlabel("mode index")
        ax.set_ylabel("eigenvalue")
        ax.legend(loc="best", fontsize=8)
        return _save(fig, path)


def render_convergence(
    meshes: Sequence[float], errors: Sequence[float], path: str, label: str = "error"
) -> str:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        h = np.asarray(meshes)
        e = np.maximum(np.asarray(errors), 1e-18)
        ax.loglog(h, e, "o-", label=label)
        if e[0] > 0:
            for order in (1, 2, 4):
                ax.loglog(
                    h,
                    e[0] * (h / h[0]) ** order,
                    "--",
                    lw=0.8,
                    label=f"order {order}",
                )
        ax.set_xlabel("mesh")
        ax.set_ylabel("error")
        ax.legend(loc="best", fontsize=8)
        return _save(fig, path)
