"""Scratch: schedule/config comparison on 40 train clips."""
import sys
import time

from scratch_trend import evaluate, make_clip
from scratch_slim import preset
from depthvos.model import build_model
from depthvos.training import StageConfig, train_two_stages

if __name__ == "__main__":
    nf = int(sys.argv[1])
    it1, it2 = int(sys.argv[2]), int(sys.argv[3])
    bs = int(sys.argv[4])
    lr2 = float(sys.argv[5]) if len(sys.argv) > 5 else 1.5e-3
    train_clips = [make_clip(100 + k) for k in range(40)]
    eval_clips = [make_clip(900 + k) for k in range(10)]
    for fusion in (True, False):
        for seed in (0, 1, 2):
            mc = preset(fusion, seed, (24, 48, 96), 48, 96, (48, 24), 5)
            model = build_model(mc)
            s1 = StageConfig(stage=1, iterations=it1, batch_size=bs, learning_rate=2e-3, weight_decay=0.01, n_frames=nf, seed=seed)
            s2 = StageConfig(stage=2, iterations=it2, batch_size=bs, learning_rate=lr2, weight_decay=0.01, n_frames=nf, seed=seed + 1)
            t0 = time.time()
            model, curves = train_two_stages(model, train_clips, s1, s2)
            dt = time.time() - t0
            rep = evaluate(model, eval_clips, use_depth=fusion)
            print(
                f"fusion={int(fusion)} seed={seed}  J&F={100*rep.jf:.1f} J={100*rep.j:.1f} F={100*rep.f:.1f} "
                f"loss->{curves['stage2'][-1]:.3f}  {dt:.0f}s", flush=True,
            )
