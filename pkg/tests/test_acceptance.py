"""Acceptance suite: one test per criterion, each printing a pass line with
its measured evidence. Criteria 6 and 7 share one trend-benchmark run."""

import hashlib
import time

import numpy as np
import pytest
import torch

import depthvos.benchmark as bench
from depthvos.core import MaskMap, ProbabilityVolume, pad_to_multiple
from depthvos.metrics import boundary_f, j_and_f, jaccard
from depthvos.model import (
    ModelConfig,
    build_model,
    init_from_first_frame,
    segment_frame,
)
from depthvos.segmenter import MemoryBank, MemoryEntry, SegmenterHeads, memory_read
from depthvos.fusion import init_fusion
from depthvos.core import FeaturePyramid
from depthvos.training import StageConfig, segmentation_loss, train_stage
from depthvos.tta import Variant, apply_variant, ensemble, invert_probability

from oracles import (
    dense_memory_read,
    exact_boundary_f,
    fd_max_rel_err,
    pixel_count_jaccard,
)


def _line(n, name, detail):
    print(f"\n[criterion {n}] PASS {name}: {detail}")


# -- 1 ----------------------------------------------------------------------


def test_criterion_1_metric_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst_f = 0.0
    for _ in range(50):
        pred = MaskMap(labels=rng.integers(0, 3, (32, 32)).astype(np.int32), num_objects=2)
        gt = MaskMap(labels=rng.integers(0, 3, (32, 32)).astype(np.int32), num_objects=2)
        tol = float(rng.choice([1.0, 2.0, 3.0]))
        for obj in (1, 2):
            j = jaccard(pred, gt, obj)
            assert j == pixel_count_jaccard(pred.labels, gt.labels, obj)
            f = boundary_f(pred, gt, obj, tol=tol)
            f_oracle = exact_boundary_f(pred.labels, gt.labels, obj, tol)
            worst_f = max(worst_f, abs(f - f_oracle))
            assert abs(f - f_oracle) <= 1e-9
    dt = time.time() - t0
    assert dt < 10.0, f"metric oracle run took {dt:.1f}s"
    _line(1, "metric oracle equivalence",
          f"50 pairs, jaccard exact, boundary_f max |diff| {worst_f:.2e}, {dt:.1f}s")


# -- 2 ----------------------------------------------------------------------


def test_criterion_2_reported_row_arithmetic():
    jf_test = 100 * j_and_f(0.881, 0.920)
    jf_flip = 100 * j_and_f(0.875, 0.918)
    assert jf_test == pytest.approx(90.05, abs=1e-9)
    assert round(jf_test, 1) == 90.1
    assert jf_flip == pytest.approx(89.65, abs=1e-9)
    assert round(jf_flip, 1) == 89.7
    _line(2, "J&F definition vs reported rows",
          f"(88.1+92.0)/2 -> {round(jf_test, 1)}, (87.5+91.8)/2 -> {round(jf_flip, 1)}")


# -- 3 ----------------------------------------------------------------------


def test_criterion_3_gradient_suite():
    t0 = time.time()
    worst = {}
    gen = torch.Generator().manual_seed(0)

    def rnd(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float64)

    # fusion
    fusion = init_fusion((3, 3, 3), (2, 2, 2), seed=1).double()
    fv = FeaturePyramid(f_s1=rnd(3, 4, 4), f_s2=rnd(3, 2, 2), f_s3=rnd(3, 1, 1))
    fg = FeaturePyramid(f_s1=rnd(2, 4, 4), f_s2=rnd(2, 2, 2), f_s3=rnd(2, 1, 1))
    ws = [rnd(3, 4, 4), rnd(3, 2, 2), rnd(3, 1, 1)]

    def fusion_loss():
        out = fusion(fv, fg)
        return sum((lvl * w).sum() for lvl, w in zip(out.maps(), ws))

    worst["fusion"] = fd_max_rel_err(fusion_loss, list(fusion.parameters()))

    heads = SegmenterHeads((4, 6, 8), key_channels=3, value_channels=4,
                           decoder_channels=(6, 4), seed=2).double()
    with torch.no_grad():  # zero-initialized head would zero the decoder path
        heads.head.weight.copy_(rnd(*heads.head.weight.shape))
        heads.head.bias.copy_(rnd(*heads.head.bias.shape))
    f3 = rnd(8, 2, 2)

    # key encoder
    wk = rnd(3, 2, 2)
    worst["key"] = fd_max_rel_err(
        lambda: (heads.encode_key(f3) * wk).sum(), [heads.key_proj.weight]
    )

    # value encoder
    labels = np.kron([[1, 0], [0, 1]], np.ones((16, 16))).astype(np.int32)
    vmask = MaskMap(labels=labels, num_objects=1)
    wv = rnd(1, 4, 2, 2)
    worst["value"] = fd_max_rel_err(
        lambda: (heads.encode_value(f3, vmask) * wv).sum(), list(heads.value.parameters())
    )

    # decoder, both stages plus skips and head
    readout = rnd(1, 4, 2, 2)
    f2, f1 = rnd(6, 4, 4), rnd(4, 8, 8)
    wd = rnd(1, 32, 32)
    dec_params = (
        list(heads.dec_a.parameters()) + list(heads.dec_b.parameters())
        + list(heads.skip1.parameters()) + list(heads.skip2.parameters())
        + list(heads.head.parameters())
    )
    worst["decoder"] = fd_max_rel_err(
        lambda: (heads.decode(readout, f2, f1) * wd).sum(), dec_params
    )

    # loss w.r.t. probability entries
    raw = (torch.rand(3, 3, 3, generator=gen, dtype=torch.float64) * 0.8 + 0.1).requires_grad_()
    lmask = MaskMap(labels=np.array([[0, 1, 2], [1, 1, 0], [2, 0, 0]], dtype=np.int32),
                    num_objects=2)
    worst["loss"] = fd_max_rel_err(
        lambda: segmentation_loss(ProbabilityVolume(raw), lmask), [raw]
    )

    dt = time.time() - t0
    assert dt < 60.0, f"gradient suite took {dt:.1f}s"
    peak = max(worst.values())
    assert peak < 1e-4, f"worst relative error {worst}"
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    _line(3, "finite-difference gradient suite", f"{detail}; {dt:.1f}s")


# -- 4 ----------------------------------------------------------------------


def test_criterion_4_memory_read_oracle():
    worst = 0.0
    gen = torch.Generator().manual_seed(7)
    ck, cv = 4, 3
    for h in (1, 2, 3, 4, 6, 8):
        for w in (1, 2, 3, 4, 6, 8):
            for n_frames in (1, 2, 3):
                for n_obj in (0, 1, 2):
                    entries = [
                        MemoryEntry(
                            key=torch.randn(ck, h, w, generator=gen),
                            values=torch.randn(n_obj, cv, h, w, generator=gen),
                            frame_idx=i,
                        )
                        for i in range(n_frames)
                    ]
                    bank = MemoryBank(permanent=entries[0], tail=tuple(entries[1:]), capacity=7)
                    q = torch.randn(ck, h, w, generator=gen)
                    out = memory_read(q, bank)
                    oracle = dense_memory_read(
                        q, [e.key for e in entries], [e.values for e in entries]
                    )
                    if n_obj > 0:
                        worst = max(worst, float(np.abs(out.numpy() - oracle).max()))
                    # affinity row sums via a unit-value bank
                    ones_bank = MemoryBank(
                        permanent=MemoryEntry(entries[0].key, torch.ones(1, 1, h, w), 0),
                        tail=tuple(
                            MemoryEntry(e.key, torch.ones(1, 1, h, w), e.frame_idx)
                            for e in entries[1:]
                        ),
                        capacity=7,
                    )
                    sums = memory_read(q, ones_bank)
                    row_err = float((sums - 1.0).abs().max())
                    assert row_err <= 1e-6, f"affinity rows sum to 1 +/- {row_err}"
                    worst = max(worst, row_err)
    assert worst <= 1e-6
    _line(4, "memory-read dense oracle", f"324 instances, max |diff| {worst:.2e}")


# -- 5 ----------------------------------------------------------------------


def test_criterion_5_tta_invariants():
    gen = torch.Generator().manual_seed(3)

    def pv(n, h, w):
        raw = torch.rand(n + 1, h, w, generator=gen) + 0.05
        return ProbabilityVolume(probs=raw / raw.sum(dim=0, keepdim=True))

    # flip round trip bit-exact
    p = pv(2, 64, 64)
    flipped = ProbabilityVolume(probs=torch.flip(p.probs, dims=[2]))
    back = invert_probability(flipped, Variant(1.0, True), (64, 64))
    assert torch.equal(back.probs, p.probs)

    frame = pad_to_multiple(np.random.default_rng(0).random((3, 64, 64)).astype(np.float32))
    v = Variant(1.0, True)
    assert torch.equal(apply_variant(apply_variant(frame, v), v).data, frame.data)

    # duplicated-variant argmax invariance
    ps = [pv(2, 16, 16) for _ in range(3)]
    _, base = ensemble(ps)
    _, dup = ensemble(ps * 4)
    np.testing.assert_array_equal(base.labels, dup.labels)

    # ensemble permutation invariance
    _, perm = ensemble(ps[::-1])
    np.testing.assert_array_equal(base.labels, perm.labels)

    # scaled variants restore the original shape with unit sums
    worst = 0.0
    for scale in (1.25, 1.5, 0.75):
        vs = Variant(scale, False)
        th = max(16, 16 * int(np.floor(scale * 64 / 16 + 0.5)))
        scaled = pv(2, th, th)
        out = invert_probability(scaled, vs, (64, 64))
        assert tuple(out.probs.shape) == (3, 64, 64)
        err = float((out.probs.sum(dim=0) - 1.0).abs().max())
        worst = max(worst, err)
        assert err <= 1e-5
    _line(5, "TTA invariants",
          f"flip bit-exact, dup/perm argmax invariant, resized sums 1 +/- {worst:.1e}")


# -- 6 & 7 -------------------------------------------------------------------


@pytest.fixture(scope="module")
def trend():
    return bench.run_trend_benchmark(seeds=(0, 1, 2))


def test_criterion_6_depth_fusion_trend(trend):
    gap = trend.fusion_median - trend.nofusion_median
    assert trend.seconds <= 900.0, f"benchmark took {trend.seconds:.0f}s > 15 min"
    assert gap >= 1.0, (
        f"fusion median {trend.fusion_median:.2f} vs rgb-only {trend.nofusion_median:.2f}"
    )
    _line(6, "depth-fusion trend",
          f"median J&F fusion {trend.fusion_median:.2f} vs rgb-only "
          f"{trend.nofusion_median:.2f} (gap +{gap:.2f} >= 1.0), {trend.seconds:.0f}s")


def test_criterion_7_tta_trend(trend):
    assert trend.ensemble_median >= trend.fusion_median - 0.2, (
        f"ensemble median {trend.ensemble_median:.2f} vs single {trend.fusion_median:.2f}"
    )
    _line(7, "TTA non-degradation",
          f"median J&F ensemble {trend.ensemble_median:.2f} vs single "
          f"{trend.fusion_median:.2f} (>= single - 0.2)")


# -- 8 ----------------------------------------------------------------------


def test_criterion_8_freeze_and_overfit():
    tiny = ModelConfig(
        visual_channels=(8, 12, 16), geometric_channels=(8, 12, 16),
        key_channels=8, value_channels=12, decoder_channels=(8, 6),
        memory_capacity=3, seed=0,
    )
    clip = bench.make_clip(41, n_frames=4)

    model = build_model(tiny)
    enc_before = hashlib.sha256(
        b"".join(p.detach().numpy().tobytes() for n, p in sorted(model.named_parameters())
                 if n.startswith("encoder."))
    ).hexdigest()
    s1 = StageConfig(stage=1, iterations=5, batch_size=1, learning_rate=1e-3,
                     weight_decay=0.1, n_frames=2, seed=0)
    model, _ = train_stage(model, [clip], s1)
    enc_after = hashlib.sha256(
        b"".join(p.detach().numpy().tobytes() for n, p in sorted(model.named_parameters())
                 if n.startswith("encoder."))
    ).hexdigest()
    assert enc_before == enc_after, "stage 1 must leave encoder parameters bit-identical"

    model = build_model(tiny)
    single = bench.make_clip(42, n_frames=2)  # exactly one possible sample
    s2 = StageConfig(stage=2, iterations=200, batch_size=1, learning_rate=3e-3,
                     weight_decay=0.0, n_frames=2, seed=0)
    model, curve = train_stage(model, [single], s2)
    ratio = curve[-1] / curve[0]
    assert curve[-1] < 0.5 * curve[0], f"loss only fell to {ratio:.2f} of initial"
    _line(8, "freeze contract + overfit sanity",
          f"encoder hash unchanged; 200-iter loss ratio {ratio:.2f} < 0.5")


# -- 9 ----------------------------------------------------------------------


def test_criterion_9_memory_bound_and_cost():
    cfg = ModelConfig(
        visual_channels=(8, 12, 16), geometric_channels=(8, 12, 16),
        key_channels=8, value_channels=12, decoder_channels=(8, 6),
        memory_capacity=7, write_interval=1, seed=0,
    )
    model = build_model(cfg)
    clip = bench.make_clip(43, n_frames=500)
    bank = init_from_first_frame(model, clip.frames[0], clip.masks[0], clip.depths[0])
    saturation_idx = None
    times = {}
    with torch.no_grad():
        for idx in range(1, 500):
            t0 = time.perf_counter()
            _, _, bank = segment_frame(model, clip.frames[idx], bank, idx, clip.depths[idx])
            times[idx] = time.perf_counter() - t0
            assert len(bank) <= 1 + cfg.memory_capacity, f"bank grew to {len(bank)}"
            if saturation_idx is None and len(bank) == 1 + cfg.memory_capacity:
                saturation_idx = idx
    assert saturation_idx is not None
    # cost must stop growing: median late cost within 2x of the cost around
    # the saturation point (medians defeat scheduler noise)
    at_saturation = float(np.median([times[i] for i in range(saturation_idx, saturation_idx + 20)]))
    late = float(np.median([times[i] for i in range(479, 499)]))
    assert late <= 2.0 * at_saturation, (
        f"per-frame cost grew: {1e3 * late:.2f} ms late vs {1e3 * at_saturation:.2f} ms at saturation"
    )
    _line(9, "memory bound + flat cost",
          f"bank <= {1 + cfg.memory_capacity} over 500 frames; per-frame "
          f"{1e3 * at_saturation:.1f} ms at saturation vs {1e3 * late:.1f} ms late")
