"""Scratch: check learning + fusion trend before wiring acceptance. Not part of the package."""
import time

import numpy as np
import torch

from depthvos.core import MaskMap, pad_to_multiple
from depthvos.data import LoadedSequence, SequenceManifest, FrameRecord, SynthConfig, render_sequence
from depthvos.metrics import evaluate_dataset, evaluate_sequence
from depthvos.model import ModelConfig, build_model, propagate_sequence
from depthvos.training import StageConfig, train_stage, train_two_stages


def make_clip(seed, n_objects=2):
    cfg = SynthConfig(seed=seed, n_objects=n_objects)
    clip = render_sequence(cfg)
    T = cfg.n_frames
    frames = tuple(pad_to_multiple(clip["frames"][t]) for t in range(T))
    depths = tuple(torch.from_numpy(clip["depths"][t]) for t in range(T))
    masks = {t: MaskMap(labels=clip["masks"][t].astype("int32"), num_objects=n_objects) for t in range(T)}
    man = SequenceManifest(
        sequence_id=f"mem-{seed}",
        frames=tuple(FrameRecord(image=f"{t}.png", mask=f"{t}m.png") for t in range(T)),
        annotated=tuple(range(T)),
        num_objects=n_objects,
    )
    return LoadedSequence(manifest=man, frames=frames, masks=masks, depths=depths)


def evaluate(model, clips, use_depth=True):
    scores = []
    for c in clips:
        depths = c.depths if use_depth else None
        preds = propagate_sequence(model, list(c.frames), c.masks[0], list(depths) if depths else None)
        pred_masks = {i: m for i, (_, m) in preds.items()}
        scores.append(evaluate_sequence(pred_masks, c.masks, c.manifest.annotated, c.manifest.sequence_id))
    return evaluate_dataset(scores)


def run(seed, fusion, train_clips, eval_clips, it1, it2, lr1, lr2, bs):
    mc = ModelConfig(fusion_enabled=fusion, seed=seed, write_interval=5)
    model = build_model(mc)
    s1 = StageConfig(stage=1, iterations=it1, batch_size=bs, learning_rate=lr1, weight_decay=0.01, seed=seed)
    s2 = StageConfig(stage=2, iterations=it2, batch_size=bs, learning_rate=lr2, weight_decay=0.01, seed=seed + 1)
    t0 = time.time()
    model, curves = train_two_stages(model, train_clips, s1, s2)
    dt = time.time() - t0
    rep = evaluate(model, eval_clips, use_depth=fusion)
    print(
        f"seed={seed} fusion={fusion}  J&F={100*rep.jf:.1f} J={100*rep.j:.1f} F={100*rep.f:.1f} "
        f"loss {curves['stage1'][0]:.3f}->{curves['stage2'][-1]:.3f}  train {dt:.0f}s"
    )
    return rep.jf, dt


if __name__ == "__main__":
    n_train, n_eval = 12, 6  # scaled-down probe
    train_clips = [make_clip(100 + k) for k in range(n_train)]
    eval_clips = [make_clip(900 + k) for k in range(n_eval)]
    total = 0.0
    for fusion in (True, False):
        for seed in (0,):
            jf, dt = run(seed, fusion, train_clips, eval_clips, it1=150, it2=150, lr1=1e-3, lr2=3e-4, bs=4)
            total += dt
    print(f"total train time {total:.0f}s")
