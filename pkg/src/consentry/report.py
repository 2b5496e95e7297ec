"""Render a simulation run to files: delimited metrics, a plain-text
summary, and (optionally) figures.

Lives apart from the simulator on purpose: `sim.py` computes, this module
presents. Figures use the Agg backend so report generation works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .sim import Metrics

CSV_NAME = "metrics.csv"
SUMMARY_NAME = "summary.txt"
PROMPT_RATE_FIG = "prompt_rate.png"
LEARNING_FIG = "rules_learned.png"


def write_report(metrics: Metrics, out_dir: Path | str, figures: bool = True) -> list[Path]:
    """Write metrics.csv, summary.txt, and the figures; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    csv_path = out / CSV_NAME
    csv_path.write_text(metrics.to_csv(), encoding="utf-8")
    written.append(csv_path)

    summary_path = out / SUMMARY_NAME
    summary_path.write_text(metrics.summary(), encoding="utf-8")
    written.append(summary_path)

    if figures:
        written.append(_prompt_rate_figure(metrics, out / PROMPT_RATE_FIG))
        written.append(_learning_figure(metrics, out / LEARNING_FIG))
    return written


def _prompt_rate_figure(metrics: Metrics, path: Path) -> Path:
    windows = [w.index for w in metrics.windows]
    rates = [w.prompt_rate for w in metrics.windows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(windows, rates, color="#4c72b0", width=0.8)
    ax.set_xlabel("window (100 requests each)")
    ax.set_ylabel("prompt rate")
    ax.set_ylim(0, 1)
    ax.set_title("Escalations to the user per request window")
    for spine in ("top", "right"):
        ax.spines[spine].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _learning_figure(metrics: Metrics, path: Path) -> Path:
    windows = [w.index for w in metrics.windows]
    rules = [w.rules_at_end for w in metrics.windows]
    prompts = [w.prompts for w in metrics.windows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(windows, rules, marker="o", color="#55a868", label="rules in the set")
    ax.set_xlabel("window (100 requests each)")
    ax.set_ylabel("rules")
    twin = ax.twinx()
    twin.plot(windows, prompts, marker="s", color="#c44e52", label="prompts")
    twin.set_ylabel("prompts in window")
    ax.set_title("Rule set growth vs. prompting")
    lines_a, labels_a = ax.get_legend_handles_labels()
    lines_b, labels_b = twin.get_legend_handles_labels()
    ax.legend(lines_a + lines_b, labels_a + labels_b, loc="center right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
