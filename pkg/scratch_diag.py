"""Scratch: diagnose per-frame behavior of trained models."""
import numpy as np
import torch

from scratch_trend import make_clip
from scratch_slim import preset
from depthvos.metrics import jaccard
from depthvos.model import build_model, propagate_sequence
from depthvos.training import StageConfig, train_two_stages


def train_one(fusion, seed, it1, it2, clips, bs=2):
    mc = preset(fusion, seed, (24, 48, 96), 48, 96, (48, 24), 3)
    model = build_model(mc)
    s1 = StageConfig(stage=1, iterations=it1, batch_size=bs, learning_rate=2e-3, weight_decay=0.01, seed=seed)
    s2 = StageConfig(stage=2, iterations=it2, batch_size=bs, learning_rate=1e-3, weight_decay=0.01, seed=seed + 1)
    model, _ = train_two_stages(model, clips, s1, s2)
    return model


def frame_js(model, clip, use_depth):
    depths = list(clip.depths) if use_depth else None
    preds = propagate_sequence(model, list(clip.frames), clip.masks[0], depths)
    rows = []
    for t in sorted(preds):
        if t == 0:
            continue
        js = [jaccard(preds[t][1], clip.masks[t], o) for o in range(1, clip.manifest.num_objects + 1)]
        rows.append((t, js))
    return rows


if __name__ == "__main__":
    train_clips = [make_clip(100 + k) for k in range(12)]
    eval_clips = [make_clip(900 + k) for k in range(3)]
    for fusion in (True, False):
        model = train_one(fusion, 0, 150, 450, train_clips)
        print(f"=== fusion={fusion}")
        for ci, clip in enumerate(eval_clips):
            rows = frame_js(model, clip, use_depth=fusion)
            line = " ".join(f"{t}:" + ",".join(f"{j:.2f}" for j in js) for t, js in rows[::4])
            print(f" clip{ci}: {line}")
        if fusion:
            # depth knocked out: does the trained model rely on it?
            zero_d = [torch.zeros_like(d) for d in eval_clips[0].depths]
            preds = propagate_sequence(model, list(eval_clips[0].frames), eval_clips[0].masks[0], zero_d)
            js = [jaccard(preds[12][1], eval_clips[0].masks[12], o) for o in (1, 2)]
            print(f" clip0 frame12 with zeroed depth: {js}")
