"""Scratch: where do the errors land? Camo/occluder bleed per arm."""
import numpy as np
import torch

from depthvos.benchmark import (
    benchmark_clips,
    benchmark_model_config,
    benchmark_stages,
    evaluate_clips,
)
from depthvos.model import build_model
from depthvos.training import train_two_stages
from depthvos.tta import Variant, propagate_with_tta


def bleed_stats(model, clips):
    """Of predicted object pixels, how many land on true object / occluder /
    camouflage / plain background? Plus missed-object rate."""
    on_obj = on_occ = on_camo = on_bg = missed = total_gt = 0
    for c in clips:
        depths = list(c.depths) if model.fusion is not None else None
        preds = propagate_with_tta(model, list(c.frames), c.masks[0], [Variant(1.0, False)], depths=depths)
        for t in range(1, len(c.frames)):
            pred = preds[t][1].labels > 0
            gt = c.masks[t].labels > 0
            d = c.depths[t].numpy()
            occ = (~gt) & (d > 0.7)
            camo = (~gt) & (d > 0.115) & (d < 0.25)
            bg = (~gt) & ~occ & ~camo
            on_obj += int((pred & gt).sum())
            on_occ += int((pred & occ).sum())
            on_camo += int((pred & camo).sum())
            on_bg += int((pred & bg).sum())
            missed += int((~pred & gt).sum())
            total_gt += int(gt.sum())
    tot_pred = on_obj + on_occ + on_camo + on_bg
    print(
        f"  pred px on: object {on_obj/tot_pred:.2f} occluder {on_occ/tot_pred:.2f} "
        f"camo {on_camo/tot_pred:.2f} bg {on_bg/tot_pred:.2f} | recall {(on_obj/total_gt):.2f}"
    )


if __name__ == "__main__":
    train, eval_ = benchmark_clips()
    for fusion in (False, True):
        model = build_model(benchmark_model_config(fusion, 0))
        s1, s2 = benchmark_stages(0)
        model, curves = train_two_stages(model, train, s1, s2)
        jf = 100 * evaluate_clips(model, eval_, [Variant(1.0, False)]).jf
        print(f"fusion={fusion} J&F={jf:.2f} loss_end={curves['stage2'][-1]:.3f}")
        bleed_stats(model, eval_[:5])
