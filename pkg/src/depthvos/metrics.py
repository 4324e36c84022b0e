"""Region Jaccard, boundary F-measure, and sequence-level aggregation.

Conventions: an object absent from both prediction and ground truth scores 1
(correctly predicted absent); the first annotated frame is never scored (it
is the given reference); sequence scores average over objects, dataset scores
average over sequences unweighted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .core import MaskMap


def j_and_f(j: float, f: float) -> float:
    """The benchmark's headline score: the arithmetic mean of J and F."""
    return 0.5 * (j + f)


def jaccard(pred: MaskMap, gt: MaskMap, obj: int) -> float:
    """Intersection over union of one object's pixels; 1 if both sets are empty."""
    _check_pair(pred, gt, obj)
    p = pred.labels == obj
    g = gt.labels == obj
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def mask_boundary(binmask: np.ndarray) -> np.ndarray:
    """Object pixels with a 4-neighbor outside the object (image border counts
    as outside)."""
    padded = np.pad(binmask, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return binmask & ~interior


def default_boundary_tol(shape: tuple[int, int]) -> int:
    return int(math.ceil(0.008 * math.hypot(shape[0], shape[1])))


def _disk(tol: float) -> np.ndarray:
    r = int(math.floor(tol))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (yy**2 + xx**2) <= tol**2 + 1e-12


def boundary_f(pred: MaskMap, gt: MaskMap, obj: int, tol: float | None = None) -> float:
    """Boundary F-measure under a pixel-distance tolerance.

    Precision is the fraction of predicted boundary within Euclidean distance
    ``tol`` of the ground-truth boundary (computed by dilating with a disk of
    radius tol), recall symmetric, F = 2PR/(P+R). Defaults
    tol = ceil(0.008 * image diagonal). 1 if both boundaries are empty, 0 if
    exactly one is.
    """
    _check_pair(pred, gt, obj)
    if tol is None:
        tol = default_boundary_tol(pred.shape)
    if tol < 0:
        raise ValueError("tolerance must be >= 0")
    pb = mask_boundary(pred.labels == obj)
    gb = mask_boundary(gt.labels == obj)
    np_, ng = int(pb.sum()), int(gb.sum())
    if np_ == 0 and ng == 0:
        return 1.0
    if np_ == 0 or ng == 0:
        return 0.0
    disk = _disk(tol)
    gb_dil = ndimage.binary_dilation(gb, structure=disk)
    pb_dil = ndimage.binary_dilation(pb, structure=disk)
    precision = float((pb & gb_dil).sum() / np_)
    recall = float((gb & pb_dil).sum() / ng)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _check_pair(pred: MaskMap, gt: MaskMap, obj: int) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    if obj < 1 or obj > max(pred.num_objects, gt.num_objects):
        raise ValueError(f"object id {obj} out of range")


@dataclass(frozen=True)
class SequenceScore:
    sequence_id: str
    per_object_j: dict[int, float]
    per_object_f: dict[int, float]
    evaluated_frames: tuple[int, ...]

    @property
    def j(self) -> float:
        return float(np.mean(list(self.per_object_j.values())))

    @property
    def f(self) -> float:
        return float(np.mean(list(self.per_object_f.values())))

    @property
    def jf(self) -> float:
        return j_and_f(self.j, self.f)


def evaluate_sequence(
    preds: Mapping[int, MaskMap],
    gts: Mapping[int, MaskMap],
    annotated: Sequence[int],
    sequence_id: str = "",
    tol: float | None = None,
) -> SequenceScore:
    """Score a sequence on its annotated frames, excluding the first (given).

    Per-object means over scored frames, then object means, then
    J&F = (J + F) / 2.
    """
    annotated = sorted(annotated)
    scored = annotated[1:]
    if not scored:
        raise ValueError("need at least two annotated frames to score a sequence")
    missing = [i for i in scored if i not in preds]
    if missing:
        raise ValueError(f"missing prediction for annotated frame {missing[0]}")
    n_obj = max(gts[i].num_objects for i in scored)
    per_j: dict[int, list[float]] = {o: [] for o in range(1, n_obj + 1)}
    per_f: dict[int, list[float]] = {o: [] for o in range(1, n_obj + 1)}
    for idx in scored:
        for obj in range(1, n_obj + 1):
            per_j[obj].append(jaccard(preds[idx], gts[idx], obj))
            per_f[obj].append(boundary_f(preds[idx], gts[idx], obj, tol=tol))
    return SequenceScore(
        sequence_id=sequence_id,
        per_object_j={o: float(np.mean(v)) for o, v in per_j.items()},
        per_object_f={o: float(np.mean(v)) for o, v in per_f.items()},
        evaluated_frames=tuple(scored),
    )


@dataclass(frozen=True)
class DatasetReport:
    scores: tuple[SequenceScore, ...]

    @property
    def j(self) -> float:
        return float(np.mean([s.j for s in self.scores]))

    @property
    def f(self) -> float:
        return float(np.mean([s.f for s in self.scores]))

    @property
    def jf(self) -> float:
        return j_and_f(self.j, self.f)

    def table(self) -> str:
        """Human-readable table mirroring the benchmark's column structure."""
        lines = [
            "# aggregation: unweighted mean over sequences, objects averaged within each",
            f"{'Sequence':<20} {'J&F':>8} {'J':>8} {'F':>8}",
        ]
        for s in self.scores:
            lines.append(f"{s.sequence_id:<20} {100 * s.jf:>7.1f}% {100 * s.j:>7.1f}% {100 * s.f:>7.1f}%")
        lines.append(f"{'mean':<20} {100 * self.jf:>7.1f}% {100 * self.j:>7.1f}% {100 * self.f:>7.1f}%")
        return "\n".join(lines)

    def summary(self) -> dict:
        return {
            "aggregate": {"j_and_f": self.jf, "j": self.j, "f": self.f},
            "sequences": {
                s.sequence_id: {
                    "j_and_f": s.jf,
                    "j": s.j,
                    "f": s.f,
                    "per_object_j": {str(k): v for k, v in s.per_object_j.items()},
                    "per_object_f": {str(k): v for k, v in s.per_object_f.items()},
                    "evaluated_frames": list(s.evaluated_frames),
                }
                for s in self.scores
            },
        }


def evaluate_dataset(scores: Sequence[SequenceScore]) -> DatasetReport:
    if not scores:
        raise ValueError("no sequence scores to aggregate")
    return DatasetReport(scores=tuple(scores))
