"""Depth -> freeze plan, plan application, and tuning-ratio accounting."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Any

from .errors import DepthOutOfRange, PlanMismatch
from .registry import ModelHandle, ModelIR, introspect


@dataclass(frozen=True)
class FreezePlan:
    arch: str
    depth: int
    trainable_indices: tuple[int, ...]
    trainable_params: int
    total_params: int
    layer_count: int  # backbone layers in the IR the plan was made from
    ir_digest: str
    include_head: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trainable_indices"] = list(self.trainable_indices)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> FreezePlan:
        return cls(**{**d, "trainable_indices": tuple(d["trainable_indices"])})


@dataclass(frozen=True)
class TuningRatios:
    layer_ratio: float
    param_ratio: float


def make_freeze_plan(ir: ModelIR, depth: int) -> FreezePlan:
    """Unfreeze the last ``depth`` backbone layers; the head always trains."""
    n = len(ir.layers)
    if not 0 <= depth <= n:
        raise DepthOutOfRange(f"depth {depth} outside [0, {n}] for {_arch_name(ir)}")
    indices = tuple(range(n - depth, n))
    trainable = sum(ir.layers[i].tunable_params for i in indices) + ir.head.tunable_params
    return FreezePlan(
        arch=_arch_name(ir),
        depth=depth,
        trainable_indices=indices,
        trainable_params=trainable,
        total_params=ir.total_params,
        layer_count=n,
        ir_digest=ir.digest,
    )


def frozen_params(ir: ModelIR, plan: FreezePlan) -> int:
    """Parameters that do not train under ``plan``, including non-trainable state
    (e.g. normalization statistics) of unfrozen layers."""
    unfrozen = set(plan.trainable_indices)
    total = 0
    for layer in ir.layers:
        total += layer.param_count - (layer.tunable_params if layer.index in unfrozen else 0)
    return total + ir.head.param_count - ir.head.tunable_params


def apply_freeze_plan(model: ModelHandle | Any, plan: FreezePlan) -> None:
    """Set runtime trainable flags to match ``plan``; later calls overwrite earlier ones.

    Frozen batch-normalization layers run in inference mode (keras semantics for
    ``trainable=False``), so their statistics stay fixed.
    """
    keras_model = model.model if isinstance(model, ModelHandle) else model
    ir = introspect(keras_model)
    if len(ir.layers) != plan.layer_count or ir.digest != plan.ir_digest:
        raise PlanMismatch(
            f"plan for {plan.arch} ({plan.layer_count} layers, {plan.ir_digest}) does not "
            f"fit model with {len(ir.layers)} layers ({ir.digest})"
        )
    unfrozen = set(plan.trainable_indices)
    by_name = {l.name: l for l in keras_model.layers}
    for spec in ir.layers:
        by_name[spec.name].trainable = spec.index in unfrozen
    by_name[ir.head.name].trainable = True


def plan_from_model(model: ModelHandle | Any) -> set[int]:
    """Backbone indices currently marked trainable at runtime."""
    return {l.index for l in introspect(model).layers if l.trainable}


def ratios_from_counts(layers_trained: int, params_tuned: int, total_layers: int, total_params: int) -> TuningRatios:
    return TuningRatios(layers_trained / total_layers, params_tuned / total_params)


def tuning_ratios(ir: ModelIR, plan: FreezePlan) -> TuningRatios:
    """Layer ratio over the full layer count (backbone + head), param ratio over all params."""
    return ratios_from_counts(plan.depth, plan.trainable_params, ir.total_layers, plan.total_params)


def truncate2(x: float) -> float:
    """Display rule for ratios: cut (not round) to two decimals."""
    # the epsilon absorbs representation error such as 0.29 -> 0.28999999
    return math.floor(x * 100 + 1e-9) / 100


def _arch_name(ir: ModelIR) -> str:
    return ir.arch.name if ir.arch is not None else "custom"
