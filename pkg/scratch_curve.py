"""Scratch: learning-curve probe."""
import time

import torch

from scratch_trend import evaluate, make_clip
from depthvos.model import ModelConfig, build_model
from depthvos.training import StageConfig, train_stage

if __name__ == "__main__":
    train_clips = [make_clip(100 + k) for k in range(12)]
    eval_clips = [make_clip(900 + k) for k in range(4)]
    mc = ModelConfig(fusion_enabled=True, seed=0, write_interval=5)
    model = build_model(mc)
    t0 = time.time()
    s1 = StageConfig(stage=1, iterations=200, batch_size=4, learning_rate=2e-3, weight_decay=0.01, seed=0)
    model, c1 = train_stage(model, train_clips, s1)
    rep = evaluate(model, eval_clips)
    print(f"after stage1(200 @2e-3): loss {c1[0]:.3f}->{c1[-1]:.3f}, J&F={100*rep.jf:.1f}  [{time.time()-t0:.0f}s]")
    for round_ in range(4):
        s2 = StageConfig(stage=2, iterations=300, batch_size=4, learning_rate=1e-3, weight_decay=0.01, seed=round_ + 1)
        model, c2 = train_stage(model, train_clips, s2)
        rep = evaluate(model, eval_clips)
        print(f"after stage2 round {round_} (+300 @1e-3): loss ->{c2[-1]:.3f}, J&F={100*rep.jf:.1f}  [{time.time()-t0:.0f}s]")
