"""Optional figures; matplotlib is imported lazily with the Agg backend."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("--plot needs matplotlib (pip install 'artifact[plot]')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams.update({"figure.dpi": 100, "savefig.dpi": 150, "font.size": 9,
                         "axes.spines.top": False, "axes.spines.right": False,
                         "svg.hashsalt": "ttarecovery", "pdf.fonttype": 42})
    return plt


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    return path


def failure_curves(path: str | Path, curves: Sequence[tuple[str, np.ndarray, np.ndarray]],
                   delta: float) -> Path:
    """P(E_t > eps) with 3-SE bands, one line per label."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for label, p, se in curves:
        t = np.arange(1, p.size + 1)
        ax.plot(t, p, lw=1.0, label=label)
        ax.fill_between(t, np.clip(p - 3 * se, 0, 1), np.clip(p + 3 * se, 0, 1), alpha=0.2)
    ax.axhline(delta, color="k", ls="--", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("P(E_t > eps)")
    if len(curves) > 1:
        ax.legend(frameon=False)
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


def scaling_table(path: str | Path, xs: Sequence[float], taus: Sequence[float | None],
                  lbs: Sequence[float], ubs: Sequence[float], xlabel: str) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.loglog(xs, lbs, "v--", lw=0.8, label="LB")
    ax.loglog(xs, ubs, "^--", lw=0.8, label="UB")
    pts = [(x, t) for x, t in zip(xs, taus) if t is not None]
    if pts:
        ax.loglog(*zip(*pts), "o-", lw=1.2, label="measured")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("recovery time")
    ax.legend(frameon=False)
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


def violation_curve(path: str | Path, per_t: np.ndarray, shift_times: Sequence[int],
                    rho_hat: float, rho_bound: float) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 3.0))
    t = np.arange(1, per_t.size + 1)
    ax.plot(t, per_t, lw=0.8)
    for s in shift_times:
        ax.axvline(s, color="0.6", lw=0.6, ls=":")
    ax.axhline(rho_hat, color="C1", lw=0.8, label="rate")
    ax.axhline(rho_bound, color="k", ls="--", lw=0.8, label="bound")
    ax.set_xlabel("t")
    ax.set_ylabel("P(E_t > eps)")
    ax.legend(frameon=False)
    out = _save(fig, Path(path))
    plt.close(fig)
    return out
