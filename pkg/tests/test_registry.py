import numpy as np
import pytest

from layertune.errors import UnknownArchitecture, UnsupportedModel, WeightsUnavailable
from layertune.freeze import apply_freeze_plan, make_freeze_plan
from layertune.registry import (
    HEAD_NAME,
    get_architecture,
    introspect,
    list_architectures,
    load_backbone,
    preprocess_batch,
    register_backbone,
    tiny_cnn,
    unregister_backbone,
    weights_digest,
)
from reference_values import ARCH_TOTALS, LADDER_PARAMS, matches_printed

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


def test_seven_builtin_descriptors():
    archs = list_architectures()
    assert {d.name for d in archs} == set(ARCH_TOTALS)
    assert len(archs) == 7
    for d in archs:
        assert (d.total_layers, d.total_params) == ARCH_TOTALS[d.name]


def test_named_lookups():
    assert get_architecture("resnet50").total_layers == 176
    assert get_architecture("ResNet50").total_params == 23_593_859
    assert get_architecture("nasnetmobile").total_layers == 770
    assert get_architecture("nasnetmobile").total_params == 4_271_830
    with pytest.raises(UnknownArchitecture):
        get_architecture("alexnet")


@pytest.mark.parametrize("arch", sorted(ARCH_TOTALS))
def test_head_size_matches_head_only_rung(arch):
    d = get_architecture(arch)
    assert d.head_params(3) == d.feature_dim * 3 + 3
    assert matches_printed(d.head_params(3), LADDER_PARAMS[arch][0])


def test_vgg16_and_densenet_heads(builtin_irs):
    assert builtin_irs["vgg16"].head.param_count == 512 * 3 + 3 == 1539
    assert builtin_irs["densenet121"].head.param_count == 1024 * 3 + 3 == 3075


@pytest.mark.parametrize("arch", sorted(ARCH_TOTALS))
def test_realized_totals_close_to_reference(builtin_irs, arch):
    ir = builtin_irs[arch]
    layers, params = ARCH_TOTALS[arch]
    assert abs(ir.total_layers - layers) <= 2
    assert abs(ir.total_params - params) <= 0.01 * params
    assert ir.head.param_count == get_architecture(arch).feature_dim * 3 + 3


def test_fresh_model_is_head_only_trainable(builtin_irs):
    for ir in builtin_irs.values():
        assert not any(l.trainable for l in ir.layers)
        assert ir.head.trainable


def test_ir_matches_runtime_counts():
    handle, ir = load_backbone("mobilenetv2", "random", input_size=96)
    assert ir.total_params == handle.model.count_params()
    names = [l.name for l in handle.model.layers[1:]]
    assert [l.name for l in ir.layers] + [ir.head.name] == names
    assert ir.head.name == HEAD_NAME
    apply_freeze_plan(handle, make_freeze_plan(ir, len(ir.layers)))
    trainable = sum(int(np.prod(w.shape)) for w in handle.model.trainable_weights)
    assert trainable == make_freeze_plan(ir, len(ir.layers)).trainable_params


def test_xception_total_within_reference():
    handle, ir = load_backbone("xception", "random", input_size=96)
    assert abs(ir.total_params - 20_867_627) <= 0.01 * 20_867_627


def test_introspect_after_depth_five():
    handle, ir = load_backbone("vgg16", "random", input_size=64)
    apply_freeze_plan(handle, make_freeze_plan(ir, 5))
    after = introspect(handle)
    flags = [l.trainable for l in after.layers]
    assert flags == [False] * (len(flags) - 5) + [True] * 5
    assert after.head.trainable


def test_pretrained_from_local_archive_differs_from_random(tmp_path):
    import keras

    keras.utils.set_random_seed(123)
    donor = keras.applications.ResNet50(include_top=False, weights=None, input_shape=(64, 64, 3))
    donor.save_weights(tmp_path / "resnet50_notop.weights.h5")

    random_handle, random_ir = load_backbone("resnet50", "random", input_size=64)
    pre_handle, pre_ir = load_backbone(
        "resnet50", "pretrained", input_size=64, weights_dir=tmp_path, allow_download=False
    )
    assert pre_ir == random_ir
    backbone = [l.name for l in pre_ir.layers]
    assert weights_digest(pre_handle, backbone) != weights_digest(random_handle, backbone)
    assert pre_handle.meta["weights_source"].endswith("resnet50_notop.weights.h5")


def test_offline_without_archive(tmp_path):
    with pytest.raises(WeightsUnavailable):
        load_backbone("densenet121", "pretrained", input_size=64, weights_dir=tmp_path, allow_download=False)


def test_random_loads_are_reproducible():
    a, _ = load_backbone("tinycnn", "random", input_size=32, seed=5)
    b, _ = load_backbone("tinycnn", "random", input_size=32, seed=5)
    c, _ = load_backbone("tinycnn", "random", input_size=32, seed=6)
    assert weights_digest(a) == weights_digest(b) != weights_digest(c)


def test_tinycnn_declared_totals_match_build():
    desc = get_architecture("tinycnn")
    _, ir = load_backbone("tinycnn", "random", input_size=64)
    assert (ir.total_layers, ir.total_params) == (desc.total_layers, desc.total_params)
    assert desc not in list_architectures()
    assert desc in list_architectures(include_custom=True)


def test_register_custom_backbone_measures_totals():
    desc = register_backbone("tiny_probe", tiny_cnn)
    try:
        assert desc.total_layers == 10
        assert desc.total_params == 15_507
        assert desc.feature_dim == 32
        _, ir = load_backbone("tiny_probe", "random", input_size=32)
        assert ir.head.param_count == 99
    finally:
        unregister_backbone("tiny_probe")


def test_nested_model_is_unsupported():
    import keras

    inner = keras.Sequential([keras.Input((4,)), keras.layers.Dense(2)])
    outer = keras.Sequential([keras.Input((4,)), inner, keras.layers.Dense(3)])
    with pytest.raises(UnsupportedModel):
        introspect(outer)
    with pytest.raises(UnsupportedModel):
        introspect(object())


def test_preprocess_modes():
    x = np.full((1, 2, 2, 3), 0.5, dtype=np.float32)
    assert np.allclose(preprocess_batch(x, "unit"), 0.5)
    assert np.allclose(preprocess_batch(x, "tf"), 0.0)
    assert np.allclose(preprocess_batch(x, "raw255"), 127.5)
    caffe = preprocess_batch(np.zeros((1, 1, 1, 3), np.float32), "caffe")
    assert np.allclose(caffe[0, 0, 0], [-103.939, -116.779, -123.68])
    with pytest.raises(ValueError):
        preprocess_batch(x, "nope")
