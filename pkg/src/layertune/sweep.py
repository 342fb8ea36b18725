"""The fine-tuning ladder: schedules, per-rung training and the resumable sweep loop."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from typing import Any, Protocol

from .errors import NonFiniteLoss, UnknownArchitecture
from .freeze import FreezePlan, apply_freeze_plan, make_freeze_plan
from .ingest import SplitResult
from .registry import ModelHandle, get_architecture, load_backbone, weights_digest

log = logging.getLogger(__name__)

_DEFAULT_LADDERS: dict[str, list[int]] = {
    "resnet50": list(range(0, 50, 5)),
    "densenet121": list(range(0, 50, 5)),
    "vgg16": list(range(0, 14)),
    "xception": list(range(0, 28, 2)),
    "efficientnetb2": list(range(0, 42, 3)),
    "mobilenetv2": [0, 1, 3, 5, 7, 10, 15, 20, 25, 30],
    "nasnetmobile": list(range(0, 100, 10)),
}


@dataclass(frozen=True)
class SweepSchedule:
    arch: str
    depths: tuple[int, ...]

    def __post_init__(self):
        depths = tuple(int(d) for d in self.depths)
        object.__setattr__(self, "depths", depths)
        if not depths or depths[0] != 0:
            raise ValueError(f"schedule for {self.arch} must start at depth 0, got {list(depths)}")
        if any(b <= a for a, b in zip(depths, depths[1:])):
            raise ValueError(f"schedule for {self.arch} must be strictly increasing: {list(depths)}")
        backbone_layers = get_architecture(self.arch).total_layers - 1
        if depths[-1] > backbone_layers:
            raise ValueError(f"depth {depths[-1]} exceeds the {backbone_layers} backbone layers of {self.arch}")


def default_schedule(arch: str) -> SweepSchedule:
    """The per-architecture depth ladder used for the reference experiments.

    Custom backbones get every depth from 0 to their backbone layer count.
    """
    desc = get_architecture(arch)
    depths = _DEFAULT_LADDERS.get(desc.name)
    if depths is None:
        if desc.builtin:
            raise UnknownArchitecture(f"no default ladder for {arch!r}")
        depths = list(range(desc.total_layers))
    return SweepSchedule(desc.name, tuple(depths))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-4
    optimizer_name: str = "adam"
    seed: int = 42
    early_stop_patience: int | None = None
    class_weights: dict[str, float] | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def config_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainOutcome:
    epochs: list[EpochRecord]
    confusion: list[list[int]]  # rows: true class, columns: predicted, at the best epoch
    wall_time: float | None = None  # trainers that simulate time may report it


class Trainer(Protocol):
    def train(self, model: ModelHandle, plan: FreezePlan, data: SplitResult, cfg: TrainConfig) -> TrainOutcome: ...


@dataclass
class RunResult:
    arch: str
    depth: int
    plan: FreezePlan | None
    epochs: list[EpochRecord] = field(default_factory=list)
    best_val_acc: float | None = None
    best_epoch: int | None = None
    confusion: list[list[int]] | None = None
    wall_time: float = 0.0
    config_hash: str = ""
    manifest_id: str = ""
    status: str = "ok"
    error: str | None = None
    initial_weights_digest: str | None = None
    frozen_digest_before: str | None = None
    frozen_digest_after: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.arch, self.depth, self.config_hash)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["plan"] = self.plan.to_dict() if self.plan is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunResult:
        d = dict(d)
        d["plan"] = FreezePlan.from_dict(d["plan"]) if d.get("plan") else None
        d["epochs"] = [EpochRecord(**e) for e in d.get("epochs", [])]
        return cls(**d)


SweepResult = list[RunResult]


def train_at_depth(
    model: ModelHandle,
    plan: FreezePlan,
    data: SplitResult,
    cfg: TrainConfig,
    trainer: Trainer | None = None,
) -> RunResult:
    """Apply ``plan`` to ``model``, train it, and package the epoch series."""
    if not data.train or not data.val:
        raise ValueError("both train and validation sets must be non-empty")
    if trainer is None:
        from .keras_trainer import KerasTrainer

        trainer = KerasTrainer()
    apply_freeze_plan(model, plan)
    frozen = _frozen_layer_names(model, plan)
    before = weights_digest(model, frozen)
    start = time.perf_counter()
    outcome = trainer.train(model, plan, data, cfg)
    elapsed = time.perf_counter() - start
    bad = [e.epoch for e in outcome.epochs if not all(map(math.isfinite, (e.train_loss, e.val_loss)))]
    if bad:
        raise NonFiniteLoss(f"{plan.arch} depth {plan.depth}: non-finite loss at epochs {bad}")
    if not outcome.epochs:
        raise ValueError("trainer returned no epochs")
    accs = [e.val_acc for e in outcome.epochs]
    best = max(accs)
    return RunResult(
        arch=plan.arch,
        depth=plan.depth,
        plan=plan,
        epochs=list(outcome.epochs),
        best_val_acc=best,
        best_epoch=outcome.epochs[accs.index(best)].epoch,
        confusion=[list(map(int, row)) for row in outcome.confusion],
        wall_time=outcome.wall_time if outcome.wall_time is not None else elapsed,
        frozen_digest_before=before,
        frozen_digest_after=weights_digest(model, frozen),
    )


def _frozen_layer_names(model: ModelHandle, plan: FreezePlan) -> list[str]:
    from .registry import introspect

    unfrozen = set(plan.trainable_indices)
    return [l.name for l in introspect(model).layers if l.index not in unfrozen]


def _backbone_layer_names(model: ModelHandle) -> list[str]:
    from .registry import introspect

    return [l.name for l in introspect(model).layers]


Loader = Callable[[str], tuple[ModelHandle, Any]]


def run_sweep(
    arch: str,
    schedule: SweepSchedule,
    data: SplitResult,
    cfg: TrainConfig,
    *,
    store: Any = None,
    trainer: Trainer | None = None,
    loader: Loader | None = None,
    run_hash: str | None = None,
    manifest_id: str = "",
    on_rung: Callable[[RunResult, bool], None] | None = None,
) -> SweepResult:
    """Train one fresh model per depth in ``schedule``.

    Each rung is persisted to ``store`` before the next one starts, and rungs
    already stored successfully under the same ``run_hash`` are skipped. A
    failing rung is recorded and the sweep moves on.
    """
    loader = loader or (lambda name: load_backbone(name, seed=cfg.seed))
    run_hash = run_hash or config_hash({"arch": arch, "train": cfg.to_dict()})
    done = store.completed(arch, run_hash) if store is not None else {}
    reference_digest: str | None = None
    results: SweepResult = []
    for depth in schedule.depths:
        if depth in done:
            log.info("%s depth %d already stored; skipping", arch, depth)
            results.append(done[depth])
            if on_rung:
                on_rung(done[depth], True)
            continue
        result = _run_rung(arch, depth, data, cfg, trainer, loader)
        if result.ok:
            reference_digest = reference_digest or result.initial_weights_digest
            if result.initial_weights_digest != reference_digest:
                result.status, result.error = "failed", "initial weights differ from the first rung's"
        result.config_hash, result.manifest_id = run_hash, manifest_id
        if store is not None:
            store.append(result)
        results.append(result)
        if on_rung:
            on_rung(result, False)
    return results


def _run_rung(arch, depth, data, cfg, trainer, loader) -> RunResult:
    t0 = time.perf_counter()
    plan = None
    try:
        handle, ir = loader(arch)
        initial = weights_digest(handle, _backbone_layer_names(handle))
        plan = make_freeze_plan(ir, depth)
        result = train_at_depth(handle, plan, data, cfg, trainer)
        result.initial_weights_digest = initial
        return result
    except Exception as exc:  # record-and-continue: one bad rung must not sink the sweep
        log.error("%s depth %d failed: %s: %s", arch, depth, type(exc).__name__, exc)
        return RunResult(
            arch=arch,
            depth=depth,
            plan=plan,
            wall_time=time.perf_counter() - t0,
            status="failed",
            error=f"{type(exc).__name__}: {exc}",
        )


def rung_table(schedules: Sequence[SweepSchedule], irs: dict[str, Any]) -> list[dict]:
    """Rows of (arch, depth, trainable params) for a dry run."""
    rows = []
    for sched in schedules:
        ir = irs[sched.arch]
        for d in sched.depths:
            plan = make_freeze_plan(ir, d)
            rows.append({"arch": sched.arch, "depth": d, "trainable_params": plan.trainable_params})
    return rows
