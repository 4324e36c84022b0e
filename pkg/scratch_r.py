"""Scratch: write-interval sweep + longer schedule."""
import time

import torch

from scratch_trend import evaluate, make_clip
from scratch_slim import preset
from depthvos.model import build_model, propagate_sequence
from depthvos.metrics import evaluate_dataset, evaluate_sequence
from depthvos.training import StageConfig, train_two_stages


def eval_at_r(model, clips, use_depth, r):
    scores = []
    for c in clips:
        depths = list(c.depths) if use_depth else None
        preds = propagate_sequence(model, list(c.frames), c.masks[0], depths, write_interval=r)
        pred_masks = {i: m for i, (_, m) in preds.items()}
        scores.append(evaluate_sequence(pred_masks, c.masks, c.manifest.annotated, c.manifest.sequence_id))
    return evaluate_dataset(scores).jf


if __name__ == "__main__":
    train_clips = [make_clip(100 + k) for k in range(16)]
    eval_clips = [make_clip(900 + k) for k in range(6)]
    for fusion in (True, False):
        for seed in (0, 1):
            mc = preset(fusion, seed, (24, 48, 96), 48, 96, (48, 24), 3)
            model = build_model(mc)
            s1 = StageConfig(stage=1, iterations=150, batch_size=3, learning_rate=2e-3, weight_decay=0.01, seed=seed)
            s2 = StageConfig(stage=2, iterations=450, batch_size=3, learning_rate=1e-3, weight_decay=0.01, seed=seed + 1)
            t0 = time.time()
            model, curves = train_two_stages(model, train_clips, s1, s2)
            dt = time.time() - t0
            line = " ".join(
                f"r={r}:{100*eval_at_r(model, eval_clips, fusion, r):.1f}" for r in (2, 3, 5, 8, 10**9)
            )
            print(f"fusion={int(fusion)} seed={seed} loss->{curves['stage2'][-1]:.2f} [{dt:.0f}s]  J&F {line}", flush=True)
