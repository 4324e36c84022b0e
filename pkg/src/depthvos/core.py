"""Shared raster types and elementary pixel utilities.

Everything downstream (encoders, fusion, segmenter, TTA, metrics) speaks in
these four value types. All of them are immutable after construction and are
safe to share across threads. Raster data is channel-major, row-major within
each channel; that layout is also the on-disk contract of the weight archive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor


class ShapeError(ValueError):
    """Raised when raster shapes violate a contract."""


@dataclass(frozen=True)
class Frame:
    """A normalized color image, padded so both sides divide the pyramid stride.

    ``data`` is a float32 tensor [3, H, W] with values in [0, 1]. ``orig_h`` /
    ``orig_w`` record the pre-padding size so predictions can be cropped back.
    """

    data: Tensor
    orig_h: int
    orig_w: int

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise ShapeError(f"frame data must be [3, H, W], got {tuple(self.data.shape)}")
        if not (0 < self.orig_h <= self.H and 0 < self.orig_w <= self.W):
            raise ShapeError(
                f"original size {self.orig_h}x{self.orig_w} inconsistent with padded {self.H}x{self.W}"
            )

    @property
    def H(self) -> int:
        return int(self.data.shape[1])

    @property
    def W(self) -> int:
        return int(self.data.shape[2])

    def crop_to_orig(self) -> Tensor:
        """The un-padded region, [3, orig_h, orig_w]."""
        return self.data[:, : self.orig_h, : self.orig_w]

    def validate(self) -> None:
        if self.H % 16 != 0 or self.W % 16 != 0:
            raise ShapeError(f"padded size {self.H}x{self.W} not a multiple of 16")
        if self.H >= self.orig_h + 16 or self.W >= self.orig_w + 16:
            raise ShapeError("padding exceeds one stride")
        if not torch.isfinite(self.data).all():
            raise ValueError("frame contains non-finite values")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("frame values outside [0, 1]")


@dataclass(frozen=True)
class MaskMap:
    """Hard per-pixel labels. 0 is background, 1..num_objects are objects."""

    labels: np.ndarray
    num_objects: int

    def __post_init__(self):
        if self.labels.ndim != 2:
            raise ShapeError(f"mask must be [H, W], got {self.labels.shape}")
        if self.num_objects < 0:
            raise ValueError("num_objects must be >= 0")

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.labels.shape[0]), int(self.labels.shape[1]))

    def validate(self) -> None:
        lo, hi = int(self.labels.min(initial=0)), int(self.labels.max(initial=0))
        if lo < 0 or hi > self.num_objects:
            raise ValueError(
                f"labels span [{lo}, {hi}] but only {self.num_objects} objects declared"
            )

    def object_indicator(self, obj: int) -> np.ndarray:
        if not 1 <= obj <= self.num_objects:
            raise ValueError(f"object id {obj} out of range 1..{self.num_objects}")
        return self.labels == obj


@dataclass(frozen=True)
class ProbabilityVolume:
    """Soft per-pixel distribution over background + N objects.

    ``probs`` is [(N+1), H, W]; channel 0 is background. Every per-pixel
    channel sum produced by this system is 1 within 1e-5.
    """

    probs: Tensor

    def __post_init__(self):
        if self.probs.ndim != 3 or self.probs.shape[0] < 1:
            raise ShapeError(f"probability volume must be [(N+1), H, W], got {tuple(self.probs.shape)}")

    @property
    def num_objects(self) -> int:
        return int(self.probs.shape[0]) - 1

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.probs.shape[1]), int(self.probs.shape[2]))

    def validate(self, tol: float = 1e-5) -> None:
        if not torch.isfinite(self.probs).all():
            raise ValueError("probabilities contain non-finite values")
        if self.probs.min() < 0.0 or self.probs.max() > 1.0:
            raise ValueError("probabilities outside [0, 1]")
        sums = self.probs.sum(dim=0)
        err = (sums - 1.0).abs().max().item()
        if err > tol:
            raise ValueError(f"channel sums deviate from 1 by {err:.2e} > {tol:.0e}")


@dataclass(frozen=True)
class FeaturePyramid:
    """Feature maps at 1/4, 1/8 and 1/16 of the owning frame's padded size."""

    f_s1: Tensor
    f_s2: Tensor
    f_s3: Tensor

    @property
    def channels(self) -> tuple[int, int, int]:
        return (int(self.f_s1.shape[0]), int(self.f_s2.shape[0]), int(self.f_s3.shape[0]))

    def maps(self) -> tuple[Tensor, Tensor, Tensor]:
        return (self.f_s1, self.f_s2, self.f_s3)

    def validate_against(self, H: int, W: int) -> None:
        for f, s in zip(self.maps(), (4, 8, 16)):
            if f.ndim != 3:
                raise ShapeError(f"pyramid level must be [C, h, w], got {tuple(f.shape)}")
            if f.shape[1] != H // s or f.shape[2] != W // s:
                raise ShapeError(
                    f"level 1/{s} is {tuple(f.shape[1:])}, expected {(H // s, W // s)}"
                )
            if not torch.isfinite(f).all():
                raise ValueError(f"level 1/{s} contains non-finite values")


def pad_to_multiple(image, m: int = 16) -> Frame:
    """Mirror-pad an image on the bottom/right to the next multiple of ``m``.

    The mirror includes the edge row/column (a 60-row image padded to 64 gets
    rows 59, 58, 57, 56 appended), so toy convolutional encoders never see an
    artificial dark border. Values in the original region are untouched.
    """
    if m < 1:
        raise ValueError("padding multiple must be >= 1")
    if isinstance(image, Tensor):
        arr = image.detach().cpu().numpy()
    else:
        arr = np.asarray(image)
    arr = arr.astype(np.float32, copy=False)
    if arr.ndim != 3 or arr.shape[0] != 3 or arr.shape[1] == 0 or arr.shape[2] == 0:
        raise ShapeError(f"expected a nonempty [3, H, W] image, got shape {arr.shape}")
    if not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values must be finite and in [0, 1]")
    h, w = arr.shape[1], arr.shape[2]
    H = ((h + m - 1) // m) * m
    W = ((w + m - 1) // m) * m
    if (H, W) != (h, w):
        arr = np.pad(arr, ((0, 0), (0, H - h), (0, W - w)), mode="symmetric")
    return Frame(data=torch.from_numpy(np.ascontiguousarray(arr)), orig_h=h, orig_w=w)


def pad_mask_to_multiple(labels: np.ndarray, m: int = 16) -> np.ndarray:
    """Mirror-pad integer labels the same way frames are padded."""
    if labels.ndim != 2 or labels.size == 0:
        raise ShapeError(f"expected a nonempty [H, W] mask, got shape {labels.shape}")
    h, w = labels.shape
    H = ((h + m - 1) // m) * m
    W = ((w + m - 1) // m) * m
    if (H, W) == (h, w):
        return labels
    return np.pad(labels, ((0, H - h), (0, W - w)), mode="symmetric")


def argmax_decode(p: ProbabilityVolume) -> MaskMap:
    """Hard labels from a probability volume.

    Ties break toward the lowest channel index, so background wins any tie;
    the result is invariant under positive rescaling of ``p``.
    """
    probs = p.probs.detach().cpu().numpy()
    labels = np.argmax(probs, axis=0).astype(np.int32)
    return MaskMap(labels=labels, num_objects=p.num_objects)
