"""Full model assembly and the frame-level segmentation loop.

A VOSModel owns the two encoder streams, the (optional) fusion module and the
segmenter heads. Parameter names follow the archive contract: everything
under ``encoder.*`` is freezable as a unit, fusion lives at
``fusion.s{i}.{w1,b1,w2,b2}`` and the rest under ``segmenter.*``.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn, Tensor

from .core import Frame, FeaturePyramid, MaskMap, ProbabilityVolume, argmax_decode
from .encoders import ConfigError, ToyGeometricEncoder, ToyVisualEncoder
from .fusion import init_fusion
from .segmenter import MemoryBank, MemoryEntry, SegmenterHeads, memory_read, memory_write, soft_aggregate


@dataclass(frozen=True)
class ModelConfig:
    visual_channels: tuple[int, int, int] = (32, 64, 128)
    geometric_channels: tuple[int, int, int] = (32, 64, 128)
    geometric_patch: int = 14
    fusion_enabled: bool = True
    fusion_depth: int = 2
    key_channels: int = 64
    value_channels: int = 128
    decoder_channels: tuple[int, int] = (64, 32)
    memory_capacity: int = 7  # FIFO tail length, excludes the permanent slot
    write_interval: int = 5
    similarity: str = "dot"  # "dot" | "neg_l2"
    top_k: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.similarity not in ("dot", "neg_l2"):
            raise ConfigError(f"unknown similarity {self.similarity!r}")
        if self.memory_capacity < 1 or self.write_interval < 1:
            raise ConfigError("memory capacity and write interval must be >= 1")


class _Encoders(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.visual = ToyVisualEncoder(cfg.visual_channels, seed=cfg.seed)
        if cfg.fusion_enabled:
            self.geometric = ToyGeometricEncoder(
                cfg.geometric_channels, patch=cfg.geometric_patch, seed=cfg.seed
            )
        else:
            self.geometric = None


class VOSModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = _Encoders(cfg)
        if cfg.fusion_enabled:
            self.fusion = init_fusion(
                cfg.visual_channels, cfg.geometric_channels, seed=cfg.seed, depth=cfg.fusion_depth
            )
        else:
            self.fusion = None
        self.segmenter = SegmenterHeads(
            pyramid_channels=cfg.visual_channels,
            key_channels=cfg.key_channels,
            value_channels=cfg.value_channels,
            decoder_channels=cfg.decoder_channels,
            seed=cfg.seed,
        )

    def features(self, frame: Frame, depth: Tensor | None = None) -> FeaturePyramid:
        """Fused pyramid when fusion is enabled, visual pyramid otherwise."""
        fv = self.encoder.visual(frame)
        if self.fusion is None:
            return fv
        if depth is None:
            raise ConfigError("fusion is enabled but no depth map was provided")
        fg = self.encoder.geometric(frame, depth)
        return self.fusion(fv, fg)


def build_model(cfg: ModelConfig) -> VOSModel:
    return VOSModel(cfg)


def init_from_first_frame(
    model: VOSModel, frame: Frame, gt: MaskMap, depth: Tensor | None = None
) -> MemoryBank:
    """Memory bank whose permanent slot holds the annotated first frame."""
    if gt.shape != (frame.H, frame.W):
        raise ValueError(f"mask {gt.shape} does not match frame {(frame.H, frame.W)}")
    pyr = model.features(frame, depth)
    key = model.segmenter.encode_key(pyr.f_s3)
    values = model.segmenter.encode_value(pyr.f_s3, gt)
    return MemoryBank(
        permanent=MemoryEntry(key, values, frame_idx=0), capacity=model.cfg.memory_capacity
    )


def segment_frame(
    model: VOSModel,
    frame: Frame,
    bank: MemoryBank,
    frame_idx: int,
    depth: Tensor | None = None,
    write_interval: int | None = None,
    write_mask: MaskMap | None = None,
    force_write: bool | None = None,
) -> tuple[ProbabilityVolume, MaskMap, MemoryBank]:
    """One propagation step: encode, fuse, read, decode, aggregate, argmax.

    Writes to memory after predicting, iff ``frame_idx`` is a multiple of the
    write interval (``force_write`` overrides the cadence); the written mask
    is the prediction unless ``write_mask`` overrides it (training uses
    ground truth early on).
    """
    r = model.cfg.write_interval if write_interval is None else write_interval
    pyr = model.features(frame, depth)
    qkey = model.segmenter.encode_key(pyr.f_s3)
    readout = memory_read(qkey, bank, similarity=model.cfg.similarity, top_k=model.cfg.top_k)
    logits = model.segmenter.decode(readout, pyr.f_s2, pyr.f_s1)
    pv = soft_aggregate(logits)
    mask = argmax_decode(pv)
    write = (frame_idx % r == 0) if force_write is None else force_write
    if write:
        stored = mask if write_mask is None else write_mask
        values = model.segmenter.encode_value(pyr.f_s3, stored, num_objects=bank.num_objects)
        bank = memory_write(bank, qkey, values, frame_idx)
    return pv, mask, bank


def propagate_sequence(
    model: VOSModel,
    frames: list[Frame],
    first_mask: MaskMap,
    depths: list[Tensor] | None = None,
    first_idx: int = 0,
    write_interval: int | None = None,
) -> dict[int, tuple[ProbabilityVolume, MaskMap]]:
    """Propagate the first annotated mask through a whole sequence.

    Returns predictions per frame index from ``first_idx`` on; the first frame
    maps to its given mask (probability one-hot).
    """
    if depths is None:
        depths = [None] * len(frames)
    model.eval()
    out: dict[int, tuple[ProbabilityVolume, MaskMap]] = {}
    with torch.no_grad():
        bank = init_from_first_frame(model, frames[first_idx], first_mask, depths[first_idx])
        out[first_idx] = (one_hot_volume(first_mask), first_mask)
        for idx in range(first_idx + 1, len(frames)):
            pv, mask, bank = segment_frame(
                model, frames[idx], bank, idx - first_idx, depths[idx], write_interval
            )
            out[idx] = (pv, mask)
    return out


def one_hot_volume(mask: MaskMap) -> ProbabilityVolume:
    h, w = mask.shape
    labels = torch.from_numpy(mask.labels.astype("int64"))
    probs = torch.zeros(mask.num_objects + 1, h, w)
    probs.scatter_(0, labels.unsqueeze(0), 1.0)
    return ProbabilityVolume(probs=probs)


def config_to_dict(cfg: ModelConfig) -> dict:
    from dataclasses import asdict

    d = asdict(cfg)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


def config_from_dict(doc: dict) -> ModelConfig:
    import dataclasses

    fields = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = sorted(set(doc) - fields)
    if unknown:
        raise ConfigError(f"unknown model config key {unknown[0]!r}")
    kwargs = dict(doc)
    for k in ("visual_channels", "geometric_channels", "decoder_channels"):
        if k in kwargs:
            kwargs[k] = tuple(kwargs[k])
    return ModelConfig(**kwargs)


def save_checkpoint(model: VOSModel, path) -> None:
    """Weight archive plus the model config needed to rebuild it."""
    import json
    from pathlib import Path

    from .archive import save_state_dict

    path = Path(path)
    save_state_dict(path, model.state_dict())
    with open(path / "model.json", "w") as f:
        json.dump(config_to_dict(model.cfg), f, indent=1, sort_keys=True)


def load_checkpoint(path) -> VOSModel:
    import json
    from pathlib import Path

    from .archive import ArchiveError, load_state_dict

    path = Path(path)
    cfg_path = path / "model.json"
    if not cfg_path.is_file():
        raise ArchiveError(f"checkpoint {path} has no model.json")
    with open(cfg_path) as f:
        cfg = config_from_dict(json.load(f))
    model = build_model(cfg)
    load_state_dict(path, model)
    return model
