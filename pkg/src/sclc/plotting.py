"""Figure helpers; every function writes one PNG and returns its path."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_decay_table(c, norm_p, norm_t, path, title="perturbation norms vs shift"):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    c = np.asarray(c, float)
    pos = c > 0
    ax.loglog(c[pos], np.asarray(norm_p)[pos], "o-", label="||P_c||")
    ax.loglog(c[pos], np.asarray(norm_t)[pos], "s-", label="||T_c||")
    ax.set_xlabel("shift c")
    ax.set_ylabel("spectral norm")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_time_series(t, u, path, oracle=None, title="solution components"):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    u = np.atleast_2d(np.asarray(u))
    if u.shape[0] != len(t):
        u = u.T
    for k in range(u.shape[1]):
        ax.plot(t, u[:, k].real, label=f"Re u[{k}]")
    if oracle is not None:
        o = np.atleast_2d(np.asarray(oracle))
        if o.shape[0] != len(t):
            o = o.T
        ax.plot(t, o[:, 0].real, "k:", label="oracle")
    ax.set_xlabel("t")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_loglog(x, ys: dict, path, xlabel="x", ylabel="value", title=""):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name, y in ys.items():
        ax.loglog(x, y, "o-", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_lines(x, ys: dict, path, xlabel="x", ylabel="value", title="", logx=False):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name, y in ys.items():
        ax.plot(x, y, "o-", label=name)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_contour(rule, path, title="contour nodes"):
    fig, ax = plt.subplots(figsize=(5, 5))
    z = rule.points[np.abs(rule.points - rule.shift) <= 10 * max(rule.rho, 1.0)]
    ax.plot(z.real, z.imag, ".", ms=3)
    ax.axhline(0, color="k", lw=0.5)
    ax.axvline(0, color="k", lw=0.5)
    ax.set_aspect("equal")
    ax.set_title(title)
    return _save(fig, path)
