"""Test-time augmentation: multi-scale and flipped inference variants whose
probability volumes are summed into one prediction.

Each variant runs the full propagation with its own memory bank; its
per-frame probabilities are mapped back to the reference geometry and the
ensemble is the (argmax-equivalent) mean of all volumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .core import Frame, MaskMap, ProbabilityVolume, ShapeError, argmax_decode
from .model import VOSModel, propagate_sequence


@dataclass(frozen=True)
class Variant:
    scale: float
    flipped: bool

    def __post_init__(self):
        if not 0.5 <= self.scale <= 2.0:
            raise ValueError(f"variant scale {self.scale} outside [0.5, 2.0]")


def make_variants(scales, flip: bool) -> list[Variant]:
    """Cartesian product of scales with {unflipped, flipped}, in stable order."""
    scales = list(scales)
    if not scales:
        raise ValueError("need at least one scale")
    flips = (False, True) if flip else (False,)
    return [Variant(scale=s, flipped=f) for s in scales for f in flips]


def round16(x: float) -> int:
    """Nearest multiple of 16, half rounding up, never below 16."""
    return max(16, 16 * int(np.floor(x / 16.0 + 0.5)))


def apply_variant(frame: Frame, v: Variant) -> Frame:
    """Bilinear resize to the rounded scaled size, then horizontal flip."""
    th, tw = round16(v.scale * frame.H), round16(v.scale * frame.W)
    data = frame.data
    if (th, tw) != (frame.H, frame.W):
        data = F.interpolate(
            data.unsqueeze(0), size=(th, tw), mode="bilinear", align_corners=False
        )[0].clamp(0.0, 1.0)
    if v.flipped:
        data = torch.flip(data, dims=[2])
    return Frame(data=data, orig_h=th, orig_w=tw)


def apply_variant_to_depth(depth: Tensor, v: Variant) -> Tensor:
    th, tw = round16(v.scale * depth.shape[0]), round16(v.scale * depth.shape[1])
    d = depth
    if (th, tw) != tuple(depth.shape):
        d = F.interpolate(
            d.unsqueeze(0).unsqueeze(0), size=(th, tw), mode="bilinear", align_corners=False
        )[0, 0]
    if v.flipped:
        d = torch.flip(d, dims=[1])
    return d


def apply_variant_to_mask(mask: MaskMap, v: Variant) -> MaskMap:
    """Nearest-neighbor resize keeps labels crisp; used for the first frame."""
    h, w = mask.shape
    th, tw = round16(v.scale * h), round16(v.scale * w)
    labels = mask.labels
    if (th, tw) != (h, w):
        t = torch.from_numpy(labels.astype("float32")).unsqueeze(0).unsqueeze(0)
        labels = F.interpolate(t, size=(th, tw), mode="nearest")[0, 0].numpy().astype(labels.dtype)
    if v.flipped:
        labels = labels[:, ::-1].copy()
    return MaskMap(labels=labels, num_objects=mask.num_objects)


def invert_probability(p: ProbabilityVolume, v: Variant, orig_hw: tuple[int, int]) -> ProbabilityVolume:
    """Map a variant's probabilities back to the reference geometry.

    Unflips, resizes bilinearly to ``orig_hw`` and renormalizes channel sums.
    When the geometry already matches, nothing is recomputed, so pure flips
    round-trip bit-exactly.
    """
    probs = p.probs
    if v.flipped:
        probs = torch.flip(probs, dims=[2])
    if tuple(probs.shape[1:]) != tuple(orig_hw):
        probs = F.interpolate(
            probs.unsqueeze(0), size=orig_hw, mode="bilinear", align_corners=False
        )[0].clamp_min(0.0)
        probs = probs / probs.sum(dim=0, keepdim=True)
    return ProbabilityVolume(probs=probs)


def ensemble(ps: list[ProbabilityVolume]) -> tuple[ProbabilityVolume, MaskMap]:
    """Mean of the volumes (argmax-equivalent to the raw sum) plus its argmax."""
    if not ps:
        raise ValueError("nothing to ensemble")
    shape = tuple(ps[0].probs.shape)
    for p in ps[1:]:
        if tuple(p.probs.shape) != shape:
            raise ShapeError(f"volume shapes differ: {tuple(p.probs.shape)} vs {shape}")
    mean = torch.stack([p.probs for p in ps]).mean(dim=0)
    pv = ProbabilityVolume(probs=mean)
    return pv, argmax_decode(pv)


def propagate_with_tta(
    model: VOSModel,
    frames: list[Frame],
    first_mask: MaskMap,
    variants: list[Variant],
    depths: list[Tensor] | None = None,
    first_idx: int = 0,
    write_interval: int | None = None,
) -> dict[int, tuple[ProbabilityVolume, MaskMap]]:
    """Run every variant end to end with its own memory bank and sum the
    inverted probabilities per frame."""
    if not variants:
        raise ValueError("need at least one variant")
    ref_hw = (frames[first_idx].H, frames[first_idx].W)
    per_frame: dict[int, list[ProbabilityVolume]] = {}
    for v in variants:
        vframes = [apply_variant(f, v) for f in frames]
        vdepths = None
        if depths is not None:
            vdepths = [None if d is None else apply_variant_to_depth(d, v) for d in depths]
        vmask = apply_variant_to_mask(first_mask, v)
        preds = propagate_sequence(
            model, vframes, vmask, vdepths, first_idx=first_idx, write_interval=write_interval
        )
        for idx, (pv, _) in preds.items():
            per_frame.setdefault(idx, []).append(invert_probability(pv, v, ref_hw))
    out: dict[int, tuple[ProbabilityVolume, MaskMap]] = {}
    for idx, vols in sorted(per_frame.items()):
        out[idx] = ensemble(vols)
    return out
