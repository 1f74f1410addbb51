"""Plot emission. Plots are rendered purely from the CSV files, never from
in-memory state, so the CSVs stay the single source of truth."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, list(reader)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_meta_reward(csv_path: Path, out_path: Path) -> None:
    """Summed task reward over meta-training epochs."""
    header, rows = _read_csv(csv_path)
    plt = _pyplot()
    epochs = [int(r[0]) for r in rows]
    total = [float(r[header.index("reward_total")]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, total, lw=1.2)
    ax.set_xlabel("meta-training epoch")
    ax.set_ylabel("summed task reward")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def plot_adapt_metrics(csv_path: Path, out_path: Path) -> None:
    """Episode reward and channel-policy entropy over adaptation."""
    header, rows = _read_csv(csv_path)
    plt = _pyplot()
    episodes = [int(r[0]) for r in rows]
    reward = [float(r[header.index("reward")]) for r in rows]
    entropy = [float(r[header.index("entropy_channel")]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax1.plot(episodes, reward, lw=0.8)
    ax1.set_ylabel("episode reward")
    ax1.grid(alpha=0.3)
    ax2.plot(episodes, entropy, lw=0.8, color="tab:orange")
    ax2.set_ylabel("channel entropy (nats)")
    ax2.set_xlabel("episode")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def plot_eval_bars(csv_path: Path, out_path: Path) -> None:
    """Mean evaluated sum EE per (variant, UE count)."""
    header, rows = _read_csv(csv_path)
    plt = _pyplot()
    i_var = header.index("variant")
    i_n = header.index("n_ues")
    i_ee = header.index("mean_sum_ee")
    acc: dict[tuple[str, int], list[float]] = defaultdict(list)
    for r in rows:
        acc[(r[i_var], int(r[i_n]))].append(float(r[i_ee]))
    labels = [f"{v} (I={n})" for v, n in acc]
    means = [sum(xs) / len(xs) for xs in acc.values()]
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 1.2), 4))
    ax.bar(range(len(labels)), means, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("mean sum EE (bits/J)")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


__all__ = ["plot_meta_reward", "plot_adapt_metrics", "plot_eval_bars"]
