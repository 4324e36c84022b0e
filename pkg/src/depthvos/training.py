"""Two-stage optimization driver.

Stage 1 freezes every ``encoder.*`` parameter and fits the fusion module and
decoder; stage 2 fine-tunes everything except (by default) the geometric
encoder. Steps are plain first-order updates with decoupled weight decay
applied to weight matrices only; runs are deterministic per seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor

from .core import MaskMap, ProbabilityVolume
from .data import LoadedSequence, sample_pseudo_video
from .model import VOSModel, init_from_first_frame, segment_frame


@dataclass(frozen=True)
class StageConfig:
    stage: int
    iterations: int
    batch_size: int = 4
    learning_rate: float = 5e-5
    weight_decay: float = 0.5
    freeze_prefixes: tuple[str, ...] | None = None  # default derived from stage
    n_frames: int = 3
    max_skip: int = 1
    grad_clip: float | None = 1.0  # global grad-norm bound; None disables
    lr_end: float | None = None  # linear decay target; None keeps lr constant
    warmup_iters: int = 0  # linear ramp from 0 to learning_rate
    seed: int = 0

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")
        if min(self.iterations, self.batch_size, self.n_frames, self.max_skip) < 1:
            raise ValueError("iterations, batch size, frames and skip must be >= 1")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning rate must be > 0 and weight decay >= 0")
        if self.lr_end is not None and not 0 < self.lr_end <= self.learning_rate:
            raise ValueError("lr_end must be in (0, learning_rate]")
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be >= 0")
        if self.freeze_prefixes is None:
            default = ("encoder.",) if self.stage == 1 else ("encoder.geometric.",)
            object.__setattr__(self, "freeze_prefixes", default)
        if self.stage == 1 and not any(p == "encoder." for p in self.freeze_prefixes):
            raise ValueError("stage 1 must freeze all encoder.* parameters")


def segmentation_loss(p: ProbabilityVolume, gt: MaskMap) -> Tensor:
    """Cross-entropy over the (N+1)-way distribution plus mean per-object soft
    Dice, equally weighted. Zero exactly on perfect one-hot predictions (up to
    the clamping epsilon)."""
    return _loss_terms(p, gt)["total"]


def segmentation_loss_terms(p: ProbabilityVolume, gt: MaskMap) -> dict[str, Tensor]:
    return _loss_terms(p, gt)


def _loss_terms(p: ProbabilityVolume, gt: MaskMap) -> dict[str, Tensor]:
    if p.shape != gt.shape:
        raise ValueError(f"prediction {p.shape} and ground truth {gt.shape} differ")
    probs = p.probs
    labels = torch.from_numpy(gt.labels.astype("int64"))
    picked = probs.gather(0, labels.unsqueeze(0))[0]
    ce = -torch.log(picked.clamp(1e-7, 1.0)).mean()
    n = p.num_objects
    if n == 0:
        dice = torch.zeros((), dtype=probs.dtype)
    else:
        terms = []
        for obj in range(1, n + 1):
            pi = probs[obj]
            gi = (labels == obj).to(probs.dtype)
            inter = (pi * gi).sum()
            terms.append(1.0 - (2.0 * inter + 1.0) / (pi.sum() + gi.sum() + 1.0))
        dice = torch.stack(terms).mean()
    return {"total": ce + dice, "ce": ce, "dice": dice}


def _split_decay_params(model: VOSModel, freeze_prefixes: tuple[str, ...]):
    decay, no_decay, frozen = [], [], []
    for name, param in model.named_parameters():
        if any(name.startswith(pref) for pref in freeze_prefixes):
            frozen.append(param)
        elif param.ndim >= 2:
            decay.append(param)
        else:
            no_decay.append(param)  # biases are never decayed
    return decay, no_decay, frozen


def train_stage(
    model: VOSModel, dataset: list[LoadedSequence], cfg: StageConfig
) -> tuple[VOSModel, list[float]]:
    """Optimize the unfrozen parameters on pseudo-videos from ``dataset``.

    Each sample initializes memory from its first frame's ground truth and
    predicts the rest sequentially; memory writes use ground-truth masks for
    the first half of the iterations and predicted masks afterwards. Aborts
    on non-finite loss. Returns the per-iteration loss curve.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    decay, no_decay, frozen = _split_decay_params(model, cfg.freeze_prefixes)
    if not decay and not no_decay:
        raise ValueError("every parameter is frozen; nothing to train")
    prev_flags = {n: p.requires_grad for n, p in model.named_parameters()}
    for p in frozen:
        p.requires_grad_(False)
    opt = torch.optim.AdamW(
        [
            {"params": decay, "weight_decay": cfg.weight_decay},
            {"params": no_decay, "weight_decay": 0.0},
        ],
        lr=cfg.learning_rate,
    )
    model.train()
    curve: list[float] = []
    try:
        for it in range(cfg.iterations):
            lr_now = cfg.learning_rate
            if cfg.lr_end is not None and cfg.iterations > 1:
                frac = it / (cfg.iterations - 1)
                lr_now = cfg.learning_rate + (cfg.lr_end - cfg.learning_rate) * frac
            if cfg.warmup_iters > 0 and it < cfg.warmup_iters:
                lr_now = cfg.learning_rate * (it + 1) / cfg.warmup_iters
            if lr_now != cfg.learning_rate or cfg.warmup_iters > 0 or cfg.lr_end is not None:
                for group in opt.param_groups:
                    group["lr"] = lr_now
            use_gt_writes = it < cfg.iterations / 2
            opt.zero_grad()
            losses = []
            for _ in range(cfg.batch_size):
                clip = dataset[int(rng.integers(0, len(dataset)))]
                idxs = sample_pseudo_video(
                    clip.manifest.annotated, cfg.n_frames, cfg.max_skip, rng
                )
                bank = init_from_first_frame(
                    model, clip.frames[idxs[0]], clip.masks[idxs[0]], clip.depths[idxs[0]]
                )
                for step, idx in enumerate(idxs[1:], start=1):
                    gt = clip.masks[idx]
                    pv, _, bank = segment_frame(
                        model,
                        clip.frames[idx],
                        bank,
                        frame_idx=step,
                        depth=clip.depths[idx],
                        force_write=step < cfg.n_frames - 1,
                        write_mask=gt if use_gt_writes else None,
                    )
                    losses.append(segmentation_loss(pv, gt))
            loss = torch.stack(losses).mean()
            if not torch.isfinite(loss):
                raise RuntimeError(f"training diverged at iteration {it}: loss={loss.item()}")
            loss.backward()
            if cfg.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(decay + no_decay, cfg.grad_clip)
            opt.step()
            curve.append(float(loss.detach()))
    finally:
        for n, p in model.named_parameters():
            p.requires_grad_(prev_flags[n])
    return model, curve


def train_two_stages(
    model: VOSModel, dataset: list[LoadedSequence], stage1: StageConfig, stage2: StageConfig
) -> tuple[VOSModel, dict[str, list[float]]]:
    model, curve1 = train_stage(model, dataset, stage1)
    model, curve2 = train_stage(model, dataset, stage2)
    return model, {"stage1": curve1, "stage2": curve2}


def save_loss_curve(curve: list[float], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "loss"])
        for i, v in enumerate(curve):
            writer.writerow([i, f"{v:.8f}"])
