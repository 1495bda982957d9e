"""Deterministic SVG renderings of a trajectory log.

Three figures: initial/final configuration, full 3-D trajectories, and the
error norm against its exponential envelope.  Output is byte-stable across
invocations (fixed SVG hash salt, no timestamps), so plot files can be
diffed in tests and across runs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .simulator import TrajectoryLog

_SVG_OPTS = {"format": "svg", "metadata": {"Date": None}}
_MAX_POINTS = 2000


def _configure():
    plt.rcParams["svg.hashsalt"] = "sheaftrack"


def _blocks(states, dims):
    out = []
    start = 0
    for d in dims:
        out.append(states[:, start:start + d])
        start += d
    return out


def _embed3(track):
    """Pad or truncate a (T, d) track to three columns for 3-D axes."""
    import numpy as np

    t = np.zeros((track.shape[0], 3))
    d = min(track.shape[1], 3)
    t[:, :d] = track[:, :d]
    return t


def _stride(n: int) -> int:
    return max(1, n // _MAX_POINTS)


def emit_plots(log: TrajectoryLog, out_dir, prefix: str = "") -> list[Path]:
    """Render the three standard figures into ``out_dir``.

    Rejects empty (single-sample) logs before touching the renderer.
    """
    if len(log) < 2:
        raise ValueError("trajectory log is empty; nothing to plot")
    _configure()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    s = _stride(len(log))
    agent_tracks = [_embed3(b[::s]) for b in _blocks(log.agent_states, log.agent_dims)]
    target_tracks = [_embed3(b[::s]) for b in _blocks(log.target_states, log.target_dims)]
    times = log.times[::s]
    paths = []

    # initial vs final configuration
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5), sharex=True, sharey=True)
    for ax, idx, label in ((axes[0], 0, "initial"), (axes[1], -1, "final")):
        for k, tr in enumerate(agent_tracks):
            ax.plot(tr[idx, 0], tr[idx, 1], "o", color="tab:blue", ms=5,
                    label="agents" if k == 0 else None)
        for k, tr in enumerate(target_tracks):
            ax.plot(tr[idx, 0], tr[idx, 1], "*", color="tab:red", ms=11,
                    label="targets" if k == 0 else None)
        ax.set_title(f"{label} (t = {times[idx]:.2f})")
        ax.set_xlabel("x")
        ax.set_aspect("equal", adjustable="box")
        ax.grid(True, alpha=0.3)
    axes[0].set_ylabel("y")
    axes[0].legend(loc="best")
    fig.tight_layout()
    p = out_dir / f"{prefix}configuration.svg"
    fig.savefig(p, **_SVG_OPTS)
    plt.close(fig)
    paths.append(p)

    # full 3-D trajectories
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(projection="3d")
    for k, tr in enumerate(agent_tracks):
        ax.plot(tr[:, 0], tr[:, 1], tr[:, 2], color="tab:blue", lw=0.8, alpha=0.8,
                label="agents" if k == 0 else None)
    for k, tr in enumerate(target_tracks):
        ax.plot(tr[:, 0], tr[:, 1], tr[:, 2], color="tab:red", lw=1.4,
                label="targets" if k == 0 else None)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")
    ax.legend(loc="upper left")
    p = out_dir / f"{prefix}trajectories_3d.svg"
    fig.savefig(p, **_SVG_OPTS)
    plt.close(fig)
    paths.append(p)

    # error norm against the envelope (always included)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogy(times, log.error_norm[::s], color="tab:blue", label="tracking error")
    ax.semilogy(times, log.bound[::s], color="tab:orange", ls="--", label="envelope")
    ax.set_xlabel("time")
    ax.set_ylabel("norm")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best")
    fig.tight_layout()
    p = out_dir / f"{prefix}error_bound.svg"
    fig.savefig(p, **_SVG_OPTS)
    plt.close(fig)
    paths.append(p)
    return paths
