"""Render training artifacts into figures and a summary table.

Reads the per-seed metrics CSVs under a run root and writes PNG figures
plus ``summary.csv`` next to them. Rendering is headless (Agg backend) and
deterministic: same inputs, same files.
"""

from __future__ import annotations

import os

import numpy as np

from .harness import load_metrics, smoothed

__all__ = ["find_seed_dirs", "render_report"]


def find_seed_dirs(run_root: str) -> list:
    """Seed directories under a run root (or the root itself if it is one)."""
    if os.path.exists(os.path.join(run_root, "metrics.csv")):
        return [run_root]
    found = []
    for name in sorted(os.listdir(run_root)):
        candidate = os.path.join(run_root, name)
        if os.path.isdir(candidate) and os.path.exists(
                os.path.join(candidate, "metrics.csv")):
            found.append(candidate)
    return found


def _column(columns: dict, name: str) -> list:
    return columns.get(name, [])


def render_report(run_root: str, out_dir: str | None = None,
                  window: int = 100) -> list:
    """Write learning-curve, loss, accuracy, and roster figures plus summary.

    Returns the list of file paths written. Figures skip gracefully when
    their columns were never logged (for example model accuracy for the
    counts-only baseline).
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    seed_dirs = find_seed_dirs(run_root)
    if not seed_dirs:
        raise FileNotFoundError(f"no metrics.csv found under {run_root}")
    out_dir = out_dir or run_root
    os.makedirs(out_dir, exist_ok=True)
    runs = [(os.path.basename(d.rstrip(os.sep)),
             load_metrics(os.path.join(d, "metrics.csv")))
            for d in seed_dirs]
    written = []

    def save(fig, name):
        path = os.path.join(out_dir, name)
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    curves = []
    for label, columns in runs:
        steps = _column(columns, "step")
        values = [v for v in _column(columns, "mean_return")]
        if not values or any(v is None for v in values):
            continue
        curve = smoothed(values, window)
        curves.append(curve)
        ax.plot(steps, curve, alpha=0.45, linewidth=1.0, label=label)
    if curves:
        shortest = min(len(c) for c in curves)
        mean_curve = np.mean([c[:shortest] for c in curves], axis=0)
        ax.plot(runs[0][1]["step"][:shortest], mean_curve,
                color="black", linewidth=2.0, label="mean")
    ax.set_xlabel("environment steps")
    ax.set_ylabel(f"mean return (trailing {window}-episode mean)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save(fig, "learning_curves.png")

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    for ax, key in zip(axes, ("actor_loss", "critic_loss", "ed_loss")):
        plotted = False
        for label, columns in runs:
            pairs = [(s, v) for s, v in zip(_column(columns, "step"),
                                            _column(columns, key))
                     if v is not None]
            if not pairs:
                continue
            xs, ys = zip(*pairs)
            ax.plot(xs, smoothed(list(ys), window), alpha=0.6, linewidth=1.0)
            plotted = True
        ax.set_title(key if plotted else f"{key} (not logged)")
        ax.set_xlabel("environment steps")
    fig.tight_layout()
    save(fig, "losses.png")

    acc_pairs = []
    for label, columns in runs:
        for key in ("action_pred_acc", "obs_pred_acc"):
            pairs = [(s, v) for s, v in zip(_column(columns, "step"),
                                            _column(columns, key))
                     if v is not None]
            if pairs:
                acc_pairs.append((label, key, pairs))
    if acc_pairs:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        styles = {"action_pred_acc": "-", "obs_pred_acc": "--"}
        for label, key, pairs in acc_pairs:
            xs, ys = zip(*pairs)
            ax.plot(xs, smoothed(list(ys), window), styles[key],
                    alpha=0.6, linewidth=1.0, label=f"{label} {key}")
        ax.set_xlabel("environment steps")
        ax.set_ylabel("prediction accuracy")
        ax.set_ylim(0.0, 1.02)
        ax.legend(fontsize=7)
        fig.tight_layout()
        save(fig, "accuracy.png")

    fig, ax = plt.subplots(figsize=(7, 3.6))
    for label, columns in runs:
        sizes = _column(columns, "roster_size")
        if sizes and all(v is not None for v in sizes):
            ax.plot(_column(columns, "step"), sizes, alpha=0.6,
                    linewidth=1.0, label=label)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("roster size at episode end")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save(fig, "roster.png")

    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("seed_dir,episodes,final_step,final_smoothed_return,"
                 "best_smoothed_return\n")
        for label, columns in runs:
            values = _column(columns, "mean_return")
            steps = _column(columns, "step")
            if values and all(v is not None for v in values):
                curve = smoothed(values, window)
                fh.write(f"{label},{len(values)},{int(steps[-1])},"
                         f"{repr(float(curve[-1]))},"
                         f"{repr(float(curve.max()))}\n")
            else:
                fh.write(f"{label},{len(values)},,,\n")
    written.append(summary_path)
    return written
