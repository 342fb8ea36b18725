"""Backbone registry, head replacement and layer introspection.

The built-in descriptors carry published totals for the seven ImageNet
backbones. A realized model is the keras-applications backbone without its
top, followed by global average pooling (counted as the last backbone layer)
and a fresh dense softmax head.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import UnknownArchitecture, UnsupportedModel, WeightsUnavailable

log = logging.getLogger(__name__)

POOL_NAME = "tl_avg_pool"
HEAD_NAME = "tl_head"


@dataclass(frozen=True)
class ArchDescriptor:
    name: str
    total_layers: int
    total_params: int
    feature_dim: int
    preprocess_mode: str
    builtin: bool = True

    def __post_init__(self):
        if min(self.total_layers, self.total_params, self.feature_dim) <= 0:
            raise ValueError(f"descriptor {self.name} needs positive totals")

    def head_params(self, num_classes: int = 3) -> int:
        return self.feature_dim * num_classes + num_classes


# Published totals (layers include pooling + head; params include the 3-way head).
_BUILTIN: dict[str, tuple[ArchDescriptor, str]] = {
    d.name: (d, app)
    for d, app in [
        (ArchDescriptor("resnet50", 176, 23_593_859, 2048, "caffe"), "ResNet50"),
        (ArchDescriptor("xception", 133, 20_867_627, 2048, "tf"), "Xception"),
        (ArchDescriptor("vgg16", 20, 14_716_227, 512, "caffe"), "VGG16"),
        (ArchDescriptor("efficientnetb2", 340, 7_772_796, 1408, "raw255"), "EfficientNetB2"),
        (ArchDescriptor("densenet121", 428, 7_040_579, 1024, "torch"), "DenseNet121"),
        (ArchDescriptor("nasnetmobile", 770, 4_271_830, 1056, "tf"), "NASNetMobile"),
        (ArchDescriptor("mobilenetv2", 155, 2_260_546, 1280, "tf"), "MobileNetV2"),
    ]
}

# builder(input_shape, weights) -> keras.Model without classifier or pooling
Builder = Callable[[tuple[int, int, int], Any], Any]
_CUSTOM: dict[str, tuple[ArchDescriptor, Builder]] = {}


def list_architectures(include_custom: bool = False) -> list[ArchDescriptor]:
    archs = [d for d, _ in _BUILTIN.values()]
    if include_custom:
        archs += [d for d, _ in _CUSTOM.values()]
    return archs


def get_architecture(name: str) -> ArchDescriptor:
    key = name.lower()
    if key in _BUILTIN:
        return _BUILTIN[key][0]
    if key in _CUSTOM:
        return _CUSTOM[key][0]
    raise UnknownArchitecture(f"unknown architecture {name!r}")


def register_backbone(
    name: str,
    builder: Builder,
    preprocess_mode: str = "unit",
    *,
    total_layers: int | None = None,
    total_params: int | None = None,
    feature_dim: int | None = None,
    probe_size: int = 64,
    num_classes: int = 3,
) -> ArchDescriptor:
    """Register a custom backbone under the same IR contract as the built-ins.

    Totals that are not given are measured by building the model once.
    """
    key = name.lower()
    if key in _BUILTIN:
        raise ValueError(f"{name!r} is a built-in architecture")
    if None in (total_layers, total_params, feature_dim):
        model = _assemble(builder((probe_size, probe_size, 3), None), num_classes, key)
        ir = introspect(model, arch=None)
        total_layers, total_params = ir.total_layers, ir.total_params
        feature_dim = int(model.get_layer(HEAD_NAME).input.shape[-1])
    desc = ArchDescriptor(key, total_layers, total_params, feature_dim, preprocess_mode, builtin=False)
    _CUSTOM[key] = (desc, builder)
    return desc


def unregister_backbone(name: str) -> None:
    _CUSTOM.pop(name.lower(), None)


@dataclass(frozen=True)
class LayerSpec:
    index: int
    name: str
    param_count: int
    tunable_params: int  # weights that train when the layer is unfrozen
    trainable: bool
    kind: str = ""


@dataclass(frozen=True)
class ModelIR:
    arch: ArchDescriptor | None
    layers: tuple[LayerSpec, ...]
    head: LayerSpec

    @property
    def total_layers(self) -> int:
        return len(self.layers) + 1

    @property
    def total_params(self) -> int:
        return sum(l.param_count for l in self.layers) + self.head.param_count

    @property
    def digest(self) -> str:
        shape = [[l.name, l.param_count, l.tunable_params] for l in (*self.layers, self.head)]
        return hashlib.sha256(json.dumps(shape).encode()).hexdigest()[:16]


@dataclass
class ModelHandle:
    """A realized keras model plus what it was built from. Not thread-safe."""

    arch: ArchDescriptor
    model: Any
    weights: str
    input_size: int
    num_classes: int = 3
    meta: dict = field(default_factory=dict)


def _keras():
    import keras

    return keras


def _count(variables) -> int:
    return int(sum(int(np.prod(v.shape)) for v in variables))


def _tunable(layer) -> int:
    # keras flips every variable's flag with the layer, so probe in the unfrozen state
    was = layer.trainable
    layer.trainable = True
    try:
        return _count(layer.trainable_weights)
    finally:
        layer.trainable = was


def introspect(model: Any, arch: ArchDescriptor | None = None) -> ModelIR:
    """Describe a flat functional/sequential keras model as an ordered layer list."""
    if isinstance(model, ModelHandle):
        arch = arch or model.arch
        model = model.model
    keras = _keras()
    if not isinstance(model, keras.Model):
        raise UnsupportedModel(f"expected a keras Model, got {type(model).__name__}")
    layers = [l for l in model.layers if not isinstance(l, keras.layers.InputLayer)]
    nested = [l.name for l in layers if isinstance(l, keras.Model)]
    if nested:
        raise UnsupportedModel(f"nested models cannot be flattened: {nested}")
    if len(layers) < 2:
        raise UnsupportedModel("model needs at least one backbone layer and a head")
    specs = tuple(
        LayerSpec(i, l.name, l.count_params(), _tunable(l), bool(l.trainable), type(l).__name__)
        for i, l in enumerate(layers)
    )
    return ModelIR(arch=arch, layers=specs[:-1], head=specs[-1])


def _assemble(backbone: Any, num_classes: int, name: str) -> Any:
    keras = _keras()
    x = keras.layers.GlobalAveragePooling2D(name=POOL_NAME)(backbone.output)
    out = keras.layers.Dense(num_classes, activation="softmax", name=HEAD_NAME)(x)
    return keras.Model(backbone.inputs, out, name=f"{name}_finetune")


def resolve_weights(name: str, weights_dir: str | Path | None, allow_download: bool) -> str:
    """Local archive path if one exists, else ``"imagenet"`` when downloads are allowed."""
    if weights_dir is not None:
        for fname in (f"{name}_notop.weights.h5", f"{name}_notop.h5", f"{name}.weights.h5", f"{name}.h5"):
            path = Path(weights_dir) / fname
            if path.exists():
                return str(path)
    if allow_download:
        return "imagenet"
    raise WeightsUnavailable(
        f"no pretrained archive for {name} in {weights_dir} and downloads are disabled"
    )


def load_backbone(
    name: str,
    weights: str = "pretrained",
    num_classes: int = 3,
    *,
    input_size: int = 512,
    weights_dir: str | Path | None = None,
    allow_download: bool = True,
    seed: int = 0,
) -> tuple[ModelHandle, ModelIR]:
    """Build ``name`` with a fresh ``num_classes``-way head, frozen except for the head."""
    from .freeze import apply_freeze_plan, make_freeze_plan

    desc = get_architecture(name)
    if weights not in ("pretrained", "random"):
        raise ValueError(f"weights must be 'pretrained' or 'random', got {weights!r}")
    keras = _keras()
    keras.utils.set_random_seed(seed)
    shape = (input_size, input_size, 3)
    if desc.builtin:
        source = resolve_weights(desc.name, weights_dir, allow_download) if weights == "pretrained" else None
        app = getattr(keras.applications, _BUILTIN[desc.name][1])
        try:
            backbone = app(include_top=False, weights=source, input_shape=shape)
        except Exception as exc:  # keras raises bare Exception/ValueError/URLError on fetch problems
            if source == "imagenet":
                raise WeightsUnavailable(f"could not obtain imagenet weights for {name}: {exc}") from exc
            raise
    else:
        builder = _CUSTOM[desc.name][1]
        source = None
        if weights == "pretrained":
            if weights_dir is None:
                raise WeightsUnavailable(f"custom backbone {name} needs a weights_dir for pretrained weights")
            source = resolve_weights(desc.name, weights_dir, allow_download=False)
        backbone = builder(shape, source)
    model = _assemble(backbone, num_classes, desc.name)
    handle = ModelHandle(desc, model, weights, input_size, num_classes, meta={"weights_source": source})
    ir = introspect(model, arch=desc)
    apply_freeze_plan(handle, make_freeze_plan(ir, 0))
    ir = introspect(model, arch=desc)
    if ir.total_layers != desc.total_layers or ir.total_params != desc.total_params:
        log.info(
            "%s realized %d layers / %d params (reference %d / %d)",
            desc.name, ir.total_layers, ir.total_params, desc.total_layers, desc.total_params,
        )
    return handle, ir


def weights_digest(model: Any, layer_names: list[str] | None = None) -> str:
    """SHA-256 over every variable of the named layers (all layers when omitted)."""
    if isinstance(model, ModelHandle):
        model = model.model
    h = hashlib.sha256()
    layers = model.layers if layer_names is None else [model.get_layer(n) for n in layer_names]
    for layer in layers:
        for v in layer.weights:
            arr = np.ascontiguousarray(np.asarray(v))
            h.update(layer.name.encode())
            h.update(arr.tobytes())
    return h.hexdigest()


_CAFFE_MEAN = np.array([103.939, 116.779, 123.68], dtype=np.float32)
_TORCH_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_TORCH_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def preprocess_batch(x: np.ndarray, mode: str) -> np.ndarray:
    """Map [0, 1] RGB pixels to the input convention a backbone's weights expect."""
    x = np.asarray(x, dtype=np.float32)
    if mode == "unit":
        return x
    if mode == "raw255":
        return x * 255.0
    if mode == "tf":
        return x * 2.0 - 1.0
    if mode == "torch":
        return (x - _TORCH_MEAN) / _TORCH_STD
    if mode == "caffe":
        return x[..., ::-1] * 255.0 - _CAFFE_MEAN
    raise ValueError(f"unknown preprocess mode {mode!r}")


def tiny_cnn(input_shape: tuple[int, int, int], weights: Any = None) -> Any:
    """Eight-layer CNN for desk-scale runs (conv/pool/batch-norm/activation mix)."""
    keras = _keras()
    L = keras.layers
    inp = keras.Input(shape=input_shape)
    x = L.Conv2D(8, 3, padding="same", activation="relu", name="conv_1")(inp)
    x = L.MaxPooling2D(2, name="pool_1")(x)
    x = L.Conv2D(16, 3, padding="same", activation="relu", name="conv_2")(x)
    x = L.MaxPooling2D(2, name="pool_2")(x)
    x = L.Conv2D(32, 3, padding="same", name="conv_3")(x)
    # short desk runs take ~100 steps; the default 0.99 momentum leaves stale moving stats
    x = L.BatchNormalization(momentum=0.9, name="bn_3")(x)
    x = L.Activation("relu", name="act_3")(x)
    x = L.Conv2D(32, 3, padding="same", activation="relu", name="conv_4")(x)
    model = keras.Model(inp, x, name="tinycnn")
    if weights:
        model.load_weights(weights, skip_mismatch=True)
    return model


# 8 conv-stack layers + pooling + head; 224+1168+4640+128+9248 backbone params + 99 head
register_backbone("tinycnn", tiny_cnn, total_layers=10, total_params=15_507, feature_dim=32)
