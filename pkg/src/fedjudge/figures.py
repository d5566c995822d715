"""Figure renderers for the CLI report path.

Each function takes the metric records a command produced and writes one PNG
next to the CSV. The CSV stays the contract for downstream analysis; these
are quick-look companions, and the CLI can skip them with --no-figures.
"""
from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402


def _rounds_series(records, value):
    """Group a per-round metric by round index: {round: [values across seeds]}."""
    series = defaultdict(list)
    for r in records:
        v = getattr(r, value)
        if v is not None:
            series[r.round].append(v)
    rounds = sorted(series)
    return rounds, [series[k] for k in rounds]


def accuracy_over_rounds(records, path: str) -> None:
    """Global-model accuracy per round, one faint line per seed plus the mean."""
    by_seed = defaultdict(list)
    for r in records:
        if r.global_acc is not None:
            by_seed[r.seed].append((r.round, r.global_acc))
    fig, ax = plt.subplots(figsize=(6, 4))
    for seed, points in sorted(by_seed.items()):
        points.sort()
        ax.plot(*zip(*points), color="tab:blue", alpha=0.25, linewidth=1)
    rounds, cols = _rounds_series(records, "global_acc")
    if rounds:
        ax.plot(rounds, [np.mean(c) for c in cols], color="tab:blue",
                linewidth=2, marker="o", label="mean")
        ax.legend()
    ax.set_xlabel("round")
    ax.set_ylabel("global accuracy")
    ax.set_title("Global model accuracy")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def detection_over_rounds(records, path: str) -> None:
    """Mean screening TPR and FPR per round across seeds."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for metric, color in (("tpr", "tab:green"), ("fpr", "tab:red")):
        rounds, cols = _rounds_series(records, metric)
        if rounds:
            ax.plot(rounds, [np.mean(c) for c in cols], marker="o",
                    color=color, label=metric.upper())
    ax.set_xlabel("round")
    ax.set_ylabel("rate")
    ax.set_ylim(-0.05, 1.05)
    ax.set_title("Screening detection rates")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def accuracy_vs_malice(records, path: str) -> None:
    """Final-round accuracy vs malicious fraction, defended and undefended."""
    final_round = max(r.round for r in records)
    arms = defaultdict(lambda: defaultdict(list))
    for r in records:
        if r.round == final_round and r.global_acc is not None:
            arms[r.experiment][r.malicious_frac].append(r.global_acc)
    fig, ax = plt.subplots(figsize=(6, 4))
    styles = {"sweep-malice": ("screening on", "tab:blue", "o-"),
              "sweep-malice-off": ("screening off", "tab:orange", "s--")}
    for name, by_frac in sorted(arms.items()):
        label, color, style = styles.get(name, (name, None, "o-"))
        fracs = sorted(by_frac)
        means = [np.mean(by_frac[f]) for f in fracs]
        stds = [np.std(by_frac[f]) for f in fracs]
        ax.errorbar(fracs, means, yerr=stds, fmt=style, color=color,
                    label=label, capsize=3)
    ax.set_xlabel("malicious fraction")
    ax.set_ylabel("final global accuracy")
    ax.set_title("Robustness to poisoning")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def runtime_scaling(records, path: str) -> None:
    """Judge-creation runtime vs client count, with the stage breakdown."""
    rows = sorted((r.n_clients, r) for r in records)
    counts = [c for c, _ in rows]
    train = [r.judge_ms_train for _, r in rows]
    feat = [r.judge_ms_feat for _, r in rows]
    forest = [r.judge_ms_forest for _, r in rows]
    total = [a + b + c for a, b, c in zip(train, feat, forest)]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(counts, total, "ko-", label="total")
    ax.plot(counts, train, "o-", color="tab:blue", label="model training")
    ax.plot(counts, feat, "o-", color="tab:green", label="feature extraction")
    ax.plot(counts, forest, "o-", color="tab:red", label="forest fit")
    if len(counts) >= 2:
        slope, intercept = np.polyfit(counts, total, 1)
        xs = np.array([counts[0], counts[-1]])
        ax.plot(xs, slope * xs + intercept, "k--", alpha=0.5,
                label=f"linear fit ({slope:.2f} ms/client)")
    ax.set_xlabel("clients")
    ax.set_ylabel("runtime (ms)")
    ax.set_title("Judge creation runtime")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
