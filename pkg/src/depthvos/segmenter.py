"""Memory-based mask propagation.

Keys and mask-conditioned values from past frames sit in a bank with one
permanent slot (the annotated first frame) and a FIFO tail; the current frame
segments itself by softmax-affinity readout against everything stored, a
skip-connected decoder, and multi-object soft aggregation. Intermediate-frame
storage is what lets the model survive long occlusions that defeat
first+most-recent memories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn, Tensor

from .core import MaskMap, ProbabilityVolume, ShapeError


@dataclass(frozen=True)
class MemoryEntry:
    key: Tensor  # [Ck, h, w]
    values: Tensor  # [N, Cv, h, w]
    frame_idx: int


@dataclass(frozen=True)
class MemoryBank:
    """Permanent first-frame slot plus a bounded FIFO tail.

    The bank never holds more than 1 + capacity entries, so per-frame cost
    stops growing once the tail saturates. Owned by one sequence task; writes
    return a new bank sharing the stored tensors.
    """

    permanent: MemoryEntry
    tail: tuple[MemoryEntry, ...] = ()
    capacity: int = 7

    def entries(self) -> tuple[MemoryEntry, ...]:
        return (self.permanent, *self.tail)

    def __len__(self) -> int:
        return 1 + len(self.tail)

    @property
    def num_objects(self) -> int:
        return int(self.permanent.values.shape[0])


def memory_write(bank: MemoryBank, key: Tensor, values: Tensor, frame_idx: int) -> MemoryBank:
    """Append an entry to the tail, evicting the oldest tail entry when full.

    The permanent entry is never evicted.
    """
    ref = bank.permanent
    if key.shape != ref.key.shape or values.shape != ref.values.shape:
        raise ShapeError(
            f"entry shapes {tuple(key.shape)}/{tuple(values.shape)} do not match bank "
            f"{tuple(ref.key.shape)}/{tuple(ref.values.shape)}"
        )
    tail = bank.tail + (MemoryEntry(key, values, frame_idx),)
    if len(tail) > bank.capacity:
        tail = tail[len(tail) - bank.capacity :]
    return MemoryBank(permanent=bank.permanent, tail=tail, capacity=bank.capacity)


def memory_read(
    query_key: Tensor,
    bank: MemoryBank | None,
    similarity: str = "dot",
    top_k: int | None = None,
) -> Tensor:
    """Affinity-weighted readout of stored values for every query position.

    Flattens all stored keys into M memory positions, forms the affinity
    A[q, m] = softmax_m(sim(k_q, k_m) / sqrt(Ck)) and returns A @ V per
    object: [N, Cv, h, w]. Every affinity row sums to 1.
    """
    if bank is None or len(bank) == 0:
        raise ValueError("memory bank is empty; initialize it from the first frame")
    ck, h, w = query_key.shape
    entries = bank.entries()
    mem_keys = torch.stack([e.key for e in entries])  # [E, Ck, h, w]
    mem_vals = torch.stack([e.values for e in entries])  # [E, N, Cv, h, w]
    E = mem_keys.shape[0]
    n_obj, cv = mem_vals.shape[1], mem_vals.shape[2]
    mk = mem_keys.permute(0, 2, 3, 1).reshape(E * h * w, ck)  # [M, Ck]
    q = query_key.reshape(ck, h * w)  # [Ck, Q]

    if similarity == "dot":
        logits = (mk @ q) / ck**0.5  # [M, Q]
    elif similarity == "neg_l2":
        sq_m = (mk**2).sum(dim=1, keepdim=True)  # [M, 1]
        sq_q = (q**2).sum(dim=0, keepdim=True)  # [1, Q]
        logits = -(sq_m - 2.0 * (mk @ q) + sq_q) / ck**0.5
    else:
        raise ValueError(f"unknown similarity {similarity!r}")

    if top_k is not None and top_k < logits.shape[0]:
        vals, idx = logits.topk(top_k, dim=0)
        aff_k = torch.softmax(vals, dim=0)
        affinity = torch.zeros_like(logits).scatter(0, idx, aff_k)
    else:
        affinity = torch.softmax(logits, dim=0)  # columns sum to 1 == rows of A[q, m]

    mv = mem_vals.permute(1, 2, 0, 3, 4).reshape(n_obj, cv, E * h * w)  # [N, Cv, M]
    readout = torch.matmul(mv, affinity)  # [N, Cv, Q]
    return readout.reshape(n_obj, cv, h, w)


def downsample_mask(mask: MaskMap, num_objects: int, stride: int = 16) -> Tensor:
    """Per-object indicators at the memory resolution by area-max: any pixel of
    object i inside a stride x stride cell marks the cell. Returns [N, 1, h, w]."""
    H, W = mask.shape
    if H % stride or W % stride:
        raise ShapeError(f"mask size {H}x{W} not a multiple of {stride}")
    labels = torch.from_numpy(np.ascontiguousarray(mask.labels)).long()
    inds = []
    for obj in range(1, num_objects + 1):
        ind = (labels == obj).float().unsqueeze(0).unsqueeze(0)
        inds.append(F.max_pool2d(ind, stride))
    if not inds:
        return torch.zeros(0, 1, H // stride, W // stride)
    return torch.cat(inds, dim=0)


class SegmenterHeads(nn.Module):
    """Key projection, mask-conditioned value encoder, and the skip decoder.

    All per-object computation shares weights, so relabeling objects permutes
    outputs identically.
    """

    def __init__(
        self,
        pyramid_channels: tuple[int, int, int] = (32, 64, 128),
        key_channels: int = 64,
        value_channels: int = 128,
        decoder_channels: tuple[int, int] = (64, 32),
        seed: int = 0,
    ):
        super().__init__()
        c1, c2, c3 = pyramid_channels
        d1, d2 = decoder_channels
        self.key_channels = key_channels
        self.value_channels = value_channels
        with torch.random.fork_rng():
            torch.manual_seed(seed + 2)
            self.key_proj = nn.Conv2d(c3, key_channels, 1, bias=False)
            self.value = nn.Sequential(
                nn.Conv2d(c3 + 1, value_channels, 3, padding=1),
                nn.ReLU(),
                nn.Conv2d(value_channels, value_channels, 3, padding=1),
            )
            self.dec_a = nn.Sequential(
                nn.Conv2d(value_channels, d1, 3, padding=1),
                nn.ReLU(),
                nn.Conv2d(d1, d1, 3, padding=1),
                nn.ReLU(),
            )
            self.skip2 = nn.Conv2d(c2, d1, 1)
            self.dec_b = nn.Sequential(
                nn.Conv2d(d1, d2, 3, padding=1),
                nn.ReLU(),
                nn.Conv2d(d2, d2, 3, padding=1),
                nn.ReLU(),
            )
            self.skip1 = nn.Conv2d(c1, d2, 1)
            self.head = nn.Conv2d(d2, 1, 1)
            # zero logits at init: aggregation starts at its maximum-gradient
            # point instead of a saturated regime it cannot escape
            nn.init.zeros_(self.head.weight)
            nn.init.zeros_(self.head.bias)

    def encode_key(self, f_s3: Tensor) -> Tensor:
        """Linear channel projection per location: [C3, h, w] -> [Ck, h, w]."""
        if f_s3.shape[0] != self.key_proj.in_channels:
            raise ShapeError(
                f"key encoder expects {self.key_proj.in_channels} channels, got {f_s3.shape[0]}"
            )
        return self.key_proj(f_s3.unsqueeze(0))[0]

    def encode_value(self, f_s3: Tensor, mask: MaskMap, num_objects: int | None = None) -> Tensor:
        """Mask-conditioned values [N, Cv, h, w]; N = 0 yields an empty set."""
        n = mask.num_objects if num_objects is None else num_objects
        h, w = f_s3.shape[1], f_s3.shape[2]
        inds = downsample_mask(mask, n, stride=mask.shape[0] // h)
        if inds.shape[2] != h or inds.shape[3] != w:
            raise ShapeError("mask and feature resolutions are inconsistent")
        if n == 0:
            return torch.zeros(0, self.value_channels, h, w, dtype=f_s3.dtype)
        feats = f_s3.unsqueeze(0).expand(n, -1, -1, -1)
        return self.value(torch.cat([feats, inds.to(f_s3.dtype)], dim=1))

    def decode(self, readout: Tensor, f_s2: Tensor, f_s1: Tensor) -> Tensor:
        """Per-object logits at full resolution: [N, H, W].

        1/16 -> 1/8 -> 1/4 with projected pyramid skips, 1x1 head, then
        bilinear x4 to the padded frame size.
        """
        n = readout.shape[0]
        H, W = f_s1.shape[1] * 4, f_s1.shape[2] * 4
        if n == 0:
            return torch.zeros(0, H, W, dtype=readout.dtype)
        x = self.dec_a(readout)
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = x + self.skip2(f_s2.unsqueeze(0))
        x = self.dec_b(x)
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = x + self.skip1(f_s1.unsqueeze(0))
        logits = self.head(x)
        logits = F.interpolate(logits, scale_factor=4, mode="bilinear", align_corners=False)
        return logits[:, 0]


def soft_aggregate(logits: Tensor) -> ProbabilityVolume:
    """Merge independent per-object logits into one (N+1)-way distribution.

    p_i = sigmoid(l_i); odds o_i = p_i / (1 - p_i) clamped to [1e-6, 1e6];
    background odds are 1; P_i = o_i / (1 + sum_j o_j). Clamping absorbs
    saturated logits, so this is total on finite input.
    """
    if logits.ndim != 3:
        raise ShapeError(f"logits must be [N, H, W], got {tuple(logits.shape)}")
    p = torch.sigmoid(logits)
    # pre-clamp p onto the interval whose odds are exactly [1e-6, 1e6]; dividing
    # first and clamping after leaves an inf local gradient that poisons training
    lo, hi = 1e-6 / (1.0 + 1e-6), 1e6 / (1.0 + 1e6)
    p = torch.clamp(p, lo, hi)
    odds = torch.clamp(p / (1.0 - p), 1e-6, 1e6)
    denom = 1.0 + odds.sum(dim=0, keepdim=True)
    probs = torch.cat([1.0 / denom, odds / denom], dim=0)
    return ProbabilityVolume(probs=probs)
