"""Scratch: TTA vs single-pass on the benchmark preset."""
import time

import torch

from scratch_trend import make_clip
from scratch_slim import preset
from depthvos.metrics import evaluate_dataset, evaluate_sequence
from depthvos.model import build_model
from depthvos.training import StageConfig, train_two_stages
from depthvos.tta import Variant, make_variants, propagate_with_tta


def eval_tta(model, clips, variants):
    scores = []
    for c in clips:
        preds = propagate_with_tta(model, list(c.frames), c.masks[0], variants, depths=list(c.depths))
        pred_masks = {i: m for i, (_, m) in preds.items()}
        scores.append(evaluate_sequence(pred_masks, c.masks, c.manifest.annotated, c.manifest.sequence_id))
    return evaluate_dataset(scores).jf


if __name__ == "__main__":
    train_clips = [make_clip(100 + k) for k in range(40)]
    eval_clips = [make_clip(900 + k) for k in range(10)]
    for seed in (0, 1, 2):
        mc = preset(True, seed, (24, 48, 96), 48, 96, (48, 24), 5)
        model = build_model(mc)
        s1 = StageConfig(stage=1, iterations=200, batch_size=3, learning_rate=2e-3, weight_decay=0.01, n_frames=2, seed=seed)
        s2 = StageConfig(stage=2, iterations=700, batch_size=3, learning_rate=1.5e-3, weight_decay=0.01, n_frames=2, seed=seed + 1)
        model, _ = train_two_stages(model, train_clips, s1, s2)
        single = eval_tta(model, eval_clips, [Variant(1.0, False)])
        t0 = time.time()
        six = eval_tta(model, eval_clips, make_variants((1.2, 1.3, 1.4), True))
        flip_only = eval_tta(model, eval_clips, make_variants((1.0,), True))
        print(
            f"seed={seed} single={100*single:.1f} flip2={100*flip_only:.1f} ms6={100*six:.1f} "
            f"(tta eval {time.time()-t0:.0f}s)", flush=True,
        )
