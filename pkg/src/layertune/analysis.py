"""Metrics, best-depth selection, response-shape labels and the summary report."""

from __future__ import annotations

import csv
import io
import json
import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllRungsFailed, EmptyConfusion, TooFewPoints
from .freeze import ratios_from_counts, truncate2
from .sweep import RunResult

log = logging.getLogger(__name__)

CONSISTENT, DIP, PLATEAU = "CONSISTENT", "DIP", "PLATEAU"


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def classification_metrics(confusion) -> Metrics:
    """Rows are true classes, columns predictions; empty rows/columns score 0."""
    cm = np.asarray(confusion, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got shape {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion counts must be non-negative")
    total = cm.sum()
    if total <= 0:
        raise EmptyConfusion("confusion matrix has no samples")
    diag = np.diag(cm)
    precision = _safe_div(diag, cm.sum(axis=0))
    recall = _safe_div(diag, cm.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return Metrics(
        accuracy=float(diag.sum() / total),
        precision=tuple(precision.tolist()),
        recall=tuple(recall.tolist()),
        f1=tuple(f1.tolist()),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
    )


def select_best_depth(sweep: Sequence[RunResult]) -> tuple[int, float]:
    """Smallest depth reaching the highest best-epoch validation accuracy."""
    ok = [r for r in sweep if r.ok and r.best_val_acc is not None]
    if not ok:
        raise AllRungsFailed("no successful rungs to select from")
    top = max(r.best_val_acc for r in ok)
    depth = min(r.depth for r in ok if r.best_val_acc == top)
    return depth, top


@dataclass(frozen=True)
class ShapeThresholds:
    near_peak_eps: float = 0.15  # fraction of the peak
    dip_delta: float = 1.5  # accuracy points


@dataclass(frozen=True)
class ResponseShape:
    label: str
    peak_acc: float
    peak_depth: int
    dip_depth: int | None = None


def classify_response(
    acc_by_depth: Sequence[tuple[int, float]],
    thresholds: ShapeThresholds = ShapeThresholds(),
) -> ResponseShape:
    """Label an accuracy-vs-depth series (accuracies in percentage points).

    DIP when some depth after the peak falls more than ``dip_delta`` below it;
    otherwise CONSISTENT when the depth-0 baseline is already within
    ``near_peak_eps * peak`` of the peak; otherwise PLATEAU.
    """
    pts = [(int(d), float(a)) for d, a in acc_by_depth]
    if len(pts) < 3:
        raise TooFewPoints(f"need at least 3 points, got {len(pts)}")
    depths = [d for d, _ in pts]
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError(f"depths must be strictly increasing: {depths}")
    peak = max(a for _, a in pts)
    peak_depth = next(d for d, a in pts if a == peak)
    for d, a in pts:
        if d > peak_depth and a < peak - thresholds.dip_delta:
            return ResponseShape(DIP, peak, peak_depth, d)
    baseline = pts[0][1]
    if peak - baseline <= thresholds.near_peak_eps * peak:
        return ResponseShape(CONSISTENT, peak, peak_depth)
    return ResponseShape(PLATEAU, peak, peak_depth)


@dataclass(frozen=True)
class ArchSummary:
    """Raw inputs to one report row."""

    arch: str
    layers_trained: int
    parameters_tuned: int
    total_layers: int
    total_params: int
    best_val_acc: float
    response_label: str | None = None
    baseline_acc: float | None = None
    baseline_params: int | None = None


def summarize_sweep(results: Sequence[RunResult], thresholds: ShapeThresholds = ShapeThresholds()) -> ArchSummary:
    ok = sorted((r for r in results if r.ok), key=lambda r: r.depth)
    depth, acc = select_best_depth(ok)
    best = next(r for r in ok if r.depth == depth)
    label = None
    if len(ok) >= 3:
        label = classify_response([(r.depth, 100 * r.best_val_acc) for r in ok], thresholds).label
    base = next((r for r in ok if r.depth == 0), None)
    return ArchSummary(
        arch=best.arch,
        layers_trained=depth,
        parameters_tuned=best.plan.trainable_params,
        total_layers=best.plan.layer_count + 1,
        total_params=best.plan.total_params,
        best_val_acc=acc,
        response_label=label,
        baseline_acc=base.best_val_acc if base else None,
        baseline_params=base.plan.trainable_params if base else None,
    )


@dataclass(frozen=True)
class ReportRow:
    arch: str
    layers_trained: int
    parameters_tuned: int
    layer_tuning_ratio: float
    parameter_tuning_ratio: float
    best_val_acc: float
    response_label: str | None = None
    baseline_acc: float | None = None
    baseline_params: int | None = None

    def display(self) -> tuple:
        return (
            self.layers_trained,
            self.parameters_tuned,
            truncate2(self.layer_tuning_ratio),
            truncate2(self.parameter_tuning_ratio),
            self.best_val_acc,
        )


@dataclass
class SweepReport:
    rows: list[ReportRow] = field(default_factory=list)

    def row(self, arch: str) -> ReportRow:
        return next(r for r in self.rows if r.arch == arch)

    def baselines(self) -> dict[str, tuple[int | None, float | None]]:
        """Depth-0 (head-only) trainable params and accuracy per architecture."""
        return {r.arch: (r.baseline_params, r.baseline_acc) for r in self.rows}

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows]}, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(ReportRow.__dataclass_fields__), lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in asdict(r).items()})
        return buf.getvalue()

    def to_markdown(self) -> str:
        head = "| Model | Layers Trained | Parameters Tuned | Layer Tuning Ratio | Parameter Tuning Ratio | Acc | Shape |"
        lines = [head, "|" + "---|" * 7]
        for r in self.rows:
            layers, params, lr, pr, acc = r.display()
            lines.append(
                f"| {r.arch} | {layers} | {params:,} | {lr:.2f} | {pr:.2f} | {_fmt_acc(acc)} | {r.response_label or '-'} |"
            )
        return "\n".join(lines) + "\n"


def _fmt_acc(acc: float) -> str:
    return f"{acc:.4f}".rstrip("0").rstrip(".")


def build_report(selections: Sequence[ArchSummary]) -> SweepReport:
    """One row per architecture, best accuracy first, then fewest tuned parameters."""
    rows = []
    for s in selections:
        ratios = ratios_from_counts(s.layers_trained, s.parameters_tuned, s.total_layers, s.total_params)
        rows.append(
            ReportRow(
                arch=s.arch,
                layers_trained=s.layers_trained,
                parameters_tuned=s.parameters_tuned,
                layer_tuning_ratio=ratios.layer_ratio,
                parameter_tuning_ratio=ratios.param_ratio,
                best_val_acc=s.best_val_acc,
                response_label=s.response_label,
                baseline_acc=s.baseline_acc,
                baseline_params=s.baseline_params,
            )
        )
    rows.sort(key=lambda r: (-r.best_val_acc, r.parameters_tuned))
    return SweepReport(rows)


def write_report(report: SweepReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in (("report.csv", report.to_csv()), ("report.md", report.to_markdown()), ("report.json", report.to_json())):
        (out / name).write_text(text)
        paths.append(out / name)
    return paths
