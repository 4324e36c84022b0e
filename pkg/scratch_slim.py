"""Scratch: slim benchmark preset probe — fusion on/off timing and gap."""
import sys
import time

import torch

from scratch_trend import evaluate, make_clip
from depthvos.model import ModelConfig, build_model
from depthvos.training import StageConfig, train_stage, train_two_stages


def preset(fusion, seed, ch, ck, cv, dec, wi):
    return ModelConfig(
        visual_channels=ch, geometric_channels=ch, fusion_enabled=fusion,
        key_channels=ck, value_channels=cv, decoder_channels=dec,
        write_interval=wi, seed=seed,
    )


if __name__ == "__main__":
    it1, it2 = int(sys.argv[1]), int(sys.argv[2])
    bs = int(sys.argv[3]) if len(sys.argv) > 3 else 2
    train_clips = [make_clip(100 + k) for k in range(12)]
    eval_clips = [make_clip(900 + k) for k in range(6)]
    for fusion in (True, False):
        for seed in (0, 1):
            mc = preset(fusion, seed, (24, 48, 96), 48, 96, (48, 24), 3)
            model = build_model(mc)
            s1 = StageConfig(stage=1, iterations=it1, batch_size=bs, learning_rate=2e-3, weight_decay=0.01, seed=seed)
            s2 = StageConfig(stage=2, iterations=it2, batch_size=bs, learning_rate=1e-3, weight_decay=0.01, seed=seed + 1)
            t0 = time.time()
            model, curves = train_two_stages(model, train_clips, s1, s2)
            dt = time.time() - t0
            rep = evaluate(model, eval_clips, use_depth=fusion)
            print(
                f"fusion={int(fusion)} seed={seed}  J&F={100*rep.jf:.1f} J={100*rep.j:.1f} F={100*rep.f:.1f} "
                f"loss->{curves['stage2'][-1]:.3f}  {dt:.0f}s", flush=True,
            )
