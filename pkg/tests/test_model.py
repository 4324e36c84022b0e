import numpy as np
import pytest
import torch

from depthvos.core import MaskMap, pad_to_multiple
from depthvos.encoders import ConfigError
from depthvos.model import (
    ModelConfig,
    build_model,
    init_from_first_frame,
    load_checkpoint,
    one_hot_volume,
    propagate_sequence,
    save_checkpoint,
    segment_frame,
)


SMALL = ModelConfig(
    visual_channels=(8, 12, 16),
    geometric_channels=(8, 12, 16),
    key_channels=8,
    value_channels=12,
    decoder_channels=(8, 6),
    memory_capacity=3,
    write_interval=2,
    seed=0,
)


def _scene(seed=0, h=64, w=64, n=2):
    rng = np.random.default_rng(seed)
    frame = pad_to_multiple(rng.random((3, h, w)).astype(np.float32))
    depth = torch.from_numpy(rng.random((frame.H, frame.W)).astype(np.float32))
    labels = np.zeros((frame.H, frame.W), dtype=np.int32)
    labels[8:20, 8:20] = 1
    if n >= 2:
        labels[35:50, 35:50] = 2
    return frame, depth, MaskMap(labels=labels, num_objects=n)


def test_parameter_namespaces():
    model = build_model(SMALL)
    names = [n for n, _ in model.named_parameters()]
    assert any(n.startswith("encoder.visual.") for n in names)
    assert any(n.startswith("encoder.geometric.") for n in names)
    assert any(n.startswith("fusion.s1.") for n in names)
    assert any(n.startswith("segmenter.") for n in names)
    assert {"fusion.s1.w1", "fusion.s1.b1", "fusion.s1.w2", "fusion.s1.b2"} <= set(names)


def test_fusion_disabled_drops_geometric_stream():
    import dataclasses

    model = build_model(dataclasses.replace(SMALL, fusion_enabled=False))
    names = [n for n, _ in model.named_parameters()]
    assert not any(n.startswith("encoder.geometric.") for n in names)
    assert not any(n.startswith("fusion.") for n in names)
    frame, _, gt = _scene()
    bank = init_from_first_frame(model, frame, gt)  # no depth needed
    pv, mask, _ = segment_frame(model, frame, bank, 1)
    assert pv.shape == (64, 64)


def test_fusion_enabled_requires_depth():
    model = build_model(SMALL)
    frame, _, gt = _scene()
    with pytest.raises(ConfigError):
        init_from_first_frame(model, frame, gt)


def test_segment_frame_contract():
    model = build_model(SMALL)
    frame, depth, gt = _scene()
    bank = init_from_first_frame(model, frame, gt, depth)
    pv, mask, bank2 = segment_frame(model, frame, bank, 1, depth)
    assert tuple(pv.probs.shape) == (3, 64, 64)
    pv.validate(tol=1e-5)
    assert mask.shape == (64, 64)


def test_write_interval_affects_memory_not_first_output():
    model = build_model(SMALL)
    frame, depth, gt = _scene()
    bank = init_from_first_frame(model, frame, gt, depth)
    pv_a, _, bank_a = segment_frame(model, frame, bank, 1, depth, write_interval=1)
    pv_b, _, bank_b = segment_frame(model, frame, bank, 1, depth, write_interval=10**9)
    assert torch.equal(pv_a.probs, pv_b.probs)
    assert len(bank_a) == 2 and len(bank_b) == 1


def test_object_relabeling_relabels_predictions():
    model = build_model(SMALL)
    gen = torch.Generator().manual_seed(77)
    with torch.no_grad():  # untrained head is zero; give predictions content.
        # negative bias keeps far-field (bit-identical) object logits below
        # background, where low-index tie-breaking cannot pick a winner
        model.segmenter.head.weight.copy_(
            torch.randn(model.segmenter.head.weight.shape, generator=gen)
        )
        model.segmenter.head.bias.fill_(-1.5)
    frame, depth, gt = _scene(n=2)
    swapped = MaskMap(
        labels=np.where(gt.labels == 1, 2, np.where(gt.labels == 2, 1, 0)).astype(np.int32),
        num_objects=2,
    )
    preds_a = propagate_sequence(model, [frame] * 4, gt, [depth] * 4)
    preds_b = propagate_sequence(model, [frame] * 4, swapped, [depth] * 4)
    for idx in range(1, 4):
        a, b = preds_a[idx][1].labels, preds_b[idx][1].labels
        np.testing.assert_array_equal(a == 1, b == 2)
        np.testing.assert_array_equal(a == 2, b == 1)


def test_propagate_marks_first_frame_with_given_mask():
    model = build_model(SMALL)
    frame, depth, gt = _scene()
    preds = propagate_sequence(model, [frame] * 3, gt, [depth] * 3)
    np.testing.assert_array_equal(preds[0][1].labels, gt.labels)
    assert set(preds) == {0, 1, 2}


def test_one_hot_volume_round_trip():
    _, _, gt = _scene()
    pv = one_hot_volume(gt)
    pv.validate(tol=0)
    from depthvos.core import argmax_decode

    np.testing.assert_array_equal(argmax_decode(pv).labels, gt.labels)


def test_checkpoint_round_trip(tmp_path):
    model = build_model(SMALL)
    save_checkpoint(model, tmp_path / "ckpt")
    clone = load_checkpoint(tmp_path / "ckpt")
    assert clone.cfg == model.cfg
    frame, depth, gt = _scene()
    bank_a = init_from_first_frame(model, frame, gt, depth)
    bank_b = init_from_first_frame(clone, frame, gt, depth)
    pv_a, _, _ = segment_frame(model, frame, bank_a, 1, depth)
    pv_b, _, _ = segment_frame(clone, frame, bank_b, 1, depth)
    assert torch.equal(pv_a.probs, pv_b.probs)


def test_memory_bound_over_long_video():
    model = build_model(SMALL)
    frame, depth, gt = _scene()
    bank = init_from_first_frame(model, frame, gt, depth)
    with torch.no_grad():
        for idx in range(1, 60):
            _, _, bank = segment_frame(model, frame, bank, idx, depth, write_interval=1)
            assert len(bank) <= 1 + SMALL.memory_capacity
