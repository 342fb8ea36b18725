"""Trainers that stand in for real optimization (CI and dry runs)."""

from __future__ import annotations

import hashlib
import math

import numpy as np

from .freeze import FreezePlan
from .ingest import CLASSES, SplitResult
from .registry import ModelHandle
from .sweep import EpochRecord, TrainConfig, TrainOutcome


def _val_counts(data: SplitResult) -> list[int]:
    counts = [0] * len(CLASSES)
    for s in data.val:
        counts[int(s.label)] += 1
    return counts


def confusion_for_accuracy(class_counts: list[int], correct: int) -> list[list[int]]:
    """A confusion matrix over ``class_counts`` with exactly ``correct`` hits on the diagonal."""
    n = sum(class_counts)
    k = len(class_counts)
    hits = [correct * c // n for c in class_counts]
    spare = correct - sum(hits)
    for i in sorted(range(k), key=lambda i: class_counts[i] - hits[i], reverse=True):
        if spare == 0:
            break
        add = min(spare, class_counts[i] - hits[i])
        hits[i] += add
        spare -= add
    cm = [[0] * k for _ in range(k)]
    for i in range(k):
        cm[i][i] = hits[i]
        cm[i][(i + 1) % k] += class_counts[i] - hits[i]
    return cm


class MockTrainer:
    """Deterministic synthetic learning curves keyed by (arch, depth, seed).

    Accuracy rises with depth and saturates, with a small seeded wobble; every
    validation accuracy is a whole number of correct samples so the confusion
    matrix at the best epoch reproduces it exactly.
    """

    def __init__(self, seconds_per_epoch: float = 0.01):
        self.seconds_per_epoch = seconds_per_epoch

    def train(self, model: ModelHandle, plan: FreezePlan, data: SplitResult, cfg: TrainConfig) -> TrainOutcome:
        counts = _val_counts(data)
        n_val = sum(counts)
        digest = hashlib.sha256(f"{plan.arch}|{plan.depth}|{cfg.seed}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        frac = plan.depth / max(plan.layer_count, 1)
        target = 0.55 + 0.38 * (1 - math.exp(-6 * frac)) + rng.uniform(-0.015, 0.015)
        epochs = []
        for e in range(cfg.epochs):
            progress = 1 - 0.5 * math.exp(-(e + 1) / 2)
            val_acc = round(min(target * progress, 1.0) * n_val) / n_val
            train_acc = min(1.0, val_acc + 0.02 * progress)
            epochs.append(
                EpochRecord(
                    epoch=e,
                    train_loss=-math.log(max(train_acc, 1e-3)),
                    train_acc=train_acc,
                    val_loss=-math.log(max(val_acc, 1e-3)),
                    val_acc=val_acc,
                )
            )
        best = max(r.val_acc for r in epochs)
        confusion = confusion_for_accuracy(counts, round(best * n_val))
        return TrainOutcome(epochs, confusion, wall_time=self.seconds_per_epoch * len(epochs))


class ScriptedTrainer:
    """Replays fixed epoch series per depth (``scripts[depth]``)."""

    def __init__(self, scripts: dict[int, list[EpochRecord]], confusion: dict[int, list[list[int]]] | None = None):
        self.scripts = scripts
        self.confusion = confusion or {}
        self.calls: list[int] = []

    def train(self, model, plan, data, cfg) -> TrainOutcome:
        self.calls.append(plan.depth)
        epochs = self.scripts[plan.depth]
        cm = self.confusion.get(plan.depth)
        if cm is None:
            counts = _val_counts(data)
            best = max(e.val_acc for e in epochs)
            cm = confusion_for_accuracy(counts, round(best * sum(counts)))
        return TrainOutcome(list(epochs), cm, wall_time=0.0)
