from __future__ import annotations

import csv
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .analysis import select_best_depth  # noqa: E402
from .sweep import RunResult  # noqa: E402

log = logging.getLogger(__name__)

FIGSIZE = (12, 8)
DPI = 100  # 1200 x 800 px


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def plot_depth_scan(arch: str, results: Sequence[RunResult], out_dir: Path) -> Path:
    ok = sorted((r for r in results if r.ok), key=lambda r: r.depth)
    depths = [r.depth for r in ok]
    accs = [100 * r.best_val_acc for r in ok]
    params = [r.plan.trainable_params for r in ok]
    _write_csv(out_dir / f"{arch}_depth_scan.csv", ["depth", "best_val_acc", "trainable_params"],
               [[d, r.best_val_acc, p] for d, r, p in zip(depths, ok, params)])

    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    ax.plot(depths, accs, "o-", color="tab:blue", label="validation accuracy")
    ax.set_xlabel("trainable layers")
    ax.set_ylabel("validation accuracy (%)", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(depths, params, "s--", color="tab:orange", label="trainable parameters")
    ax2.set_ylabel("trainable parameters", color="tab:orange")
    ax.set_title(f"{arch}: accuracy vs trainable layers vs parameters")
    ax.grid(alpha=0.3)
    path = out_dir / f"{arch}_depth_scan.png"
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_curves(arch: str, results: Sequence[RunResult], out_dir: Path) -> Path:
    depth, _ = select_best_depth(results)
    best = next(r for r in results if r.ok and r.depth == depth)
    ep = [e.epoch + 1 for e in best.epochs]
    _write_csv(out_dir / f"{arch}_curves.csv", ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"],
               [[e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc] for e in best.epochs])

    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=FIGSIZE, dpi=DPI)
    ax_acc.plot(ep, [e.train_acc for e in best.epochs], label="train")
    ax_acc.plot(ep, [e.val_acc for e in best.epochs], label="validation")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.legend()
    ax_loss.plot(ep, [e.train_loss for e in best.epochs], label="train")
    ax_loss.plot(ep, [e.val_loss for e in best.epochs], label="validation")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("weighted cross-entropy")
    ax_loss.legend()
    fig.suptitle(f"{arch}: training curves at depth {depth}")
    path = out_dir / f"{arch}_curves.png"
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def emit_plots(results_by_arch: Mapping[str, Sequence[RunResult]], out_dir: str | Path) -> list[Path]:
    """``<arch>_depth_scan.png`` and ``<arch>_curves.png`` (plus CSVs) per architecture."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for arch in sorted(results_by_arch):
        results = results_by_arch[arch]
        if not any(r.ok for r in results):
            log.warning("no successful rungs for %s; skipping plots", arch)
            continue
        written.append(plot_depth_scan(arch, results, out))
        written.append(plot_curves(arch, results, out))
    return written
