"""Figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (4.5, 3.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def moving_average(values: Sequence[float], width: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    width = max(1, min(width, values.size))
    kernel = np.ones(width) / width
    head = np.cumsum(values[: width - 1]) / np.arange(1, width)
    return np.concatenate([head, np.convolve(values, kernel, mode="valid")])


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_run(records, out_dir: str | Path, width: int = 10) -> list[Path]:
    """Reward, power and service-quality curves of one run."""
    out = Path(out_dir)
    ep = [r.episode for r in records]
    series = [
        ("reward.png", "System reward", [r.reward for r in records]),
        ("power.png", "Power per BS (W)", [r.power for r in records]),
        ("service_quality.png", "Service quality", [float(r.constraint_ok) for r in records]),
    ]
    paths = []
    with plt.rc_context(STYLE):
        for name, label, values in series:
            fig, ax = plt.subplots()
            ax.plot(ep, values, color="0.75", lw=0.8, label="per episode")
            ax.plot(ep, moving_average(values, width), color="C0", lw=1.5,
                    label=f"{width}-episode mean")
            ax.set_xlabel("Episode")
            ax.set_ylabel(label)
            ax.legend(loc="best")
            paths.append(_save(fig, out / name))
    return paths


def plot_sweep(rows: Sequence[dict], param: str, out_path: str | Path) -> Path:
    """Mean and standard error across seeds of reward, power and service quality."""
    values = sorted({row[param] for row in rows})
    metrics = [("mean_reward", "Reward"), ("mean_power", "Power per BS (W)"),
               ("service_quality", "Service quality")]
    with plt.rc_context({**STYLE, "figure.figsize": (9.0, 2.8)}):
        fig, axes = plt.subplots(1, len(metrics))
        for ax, (key, label) in zip(axes, metrics):
            means, errs = [], []
            for v in values:
                xs = np.array([row[key] for row in rows if row[param] == v])
                means.append(xs.mean())
                errs.append(xs.std(ddof=1) / np.sqrt(xs.size) if xs.size > 1 else 0.0)
            ax.errorbar(values, means, yerr=errs, marker="o", capsize=3)
            ax.set_xlabel(param)
            ax.set_ylabel(label)
        return _save(fig, Path(out_path))
