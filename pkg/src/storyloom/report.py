"""Training reports: delimited loss tables plus rendered figures.

Training subcommands drop a TSV of per-epoch losses next to each
checkpoint together with a PNG loss curve, so a run's trajectory can be
inspected without re-running anything.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def write_loss_table(losses: Sequence[float], path: str | Path) -> None:
    """Epoch-indexed TSV; epoch 0 is the pre-training loss."""
    lines = ["epoch\tloss"]
    lines.extend(f"{epoch}\t{loss:.6f}" for epoch, loss in enumerate(losses))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_loss_curve(losses: Sequence[float], path: str | Path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(losses)), losses, marker="o", linewidth=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean cross-entropy")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_training_report(
    losses: Sequence[float], checkpoint_path: str | Path, title: str
) -> tuple[Path, Path]:
    """TSV + PNG alongside a checkpoint; returns the two paths."""
    base = Path(checkpoint_path)
    tsv = base.with_suffix(base.suffix + ".losses.tsv")
    png = base.with_suffix(base.suffix + ".losses.png")
    write_loss_table(losses, tsv)
    render_loss_curve(losses, png, title)
    return tsv, png
