"""Dataset manifests, image/mask/depth I/O, pseudo-video sampling, and the
synthetic occlusion-video generator.

On-disk contract per sequence: a ``manifest.json`` listing ordered frame
records (image path, optional mask path, optional depth path), the sorted
annotated indices and the object count. Masks are palette-indexed 8-bit
images whose pixel value is the object id; depth is 16-bit grayscale scaled
to [0, 1]. Paths are stored relative to the manifest.

The synthetic generator renders colored shapes on linear+sinusoidal paths
with depth-ordered occlusion, egocentric camera shake and oracle inverse
depth. Occluders deliberately wear colors close to their target's, so RGB
alone is ambiguous while depth disambiguates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import Tensor

from .core import Frame, MaskMap, pad_mask_to_multiple, pad_to_multiple

SHAPES = ("disk", "square", "triangle")


class DataError(RuntimeError):
    """Raised for unreadable or inconsistent dataset files."""


@dataclass(frozen=True)
class FrameRecord:
    image: str
    mask: str | None = None
    depth: str | None = None


@dataclass(frozen=True)
class SequenceManifest:
    sequence_id: str
    frames: tuple[FrameRecord, ...]
    annotated: tuple[int, ...]
    num_objects: int
    root: Path = Path(".")

    def __post_init__(self):
        idx = sorted(self.annotated)
        if tuple(idx) != tuple(self.annotated):
            object.__setattr__(self, "annotated", tuple(idx))
        if any(i < 0 or i >= len(self.frames) for i in self.annotated):
            raise DataError(f"{self.sequence_id}: annotated indices outside the frame range")
        if not self.annotated:
            raise DataError(f"{self.sequence_id}: no annotated frames")
        first = self.annotated[0]
        if self.frames[first].mask is None:
            raise DataError(
                f"{self.sequence_id}: first annotated frame {first} has no mask"
            )

    def to_dict(self) -> dict:
        return {
            "sequence_id": self.sequence_id,
            "num_objects": self.num_objects,
            "annotated": list(self.annotated),
            "frames": [
                {"image": r.image, "mask": r.mask, "depth": r.depth} for r in self.frames
            ],
        }


def save_manifest(manifest: SequenceManifest, path) -> None:
    with open(path, "w") as f:
        json.dump(manifest.to_dict(), f, indent=1, sort_keys=True)


def load_manifest(path) -> SequenceManifest:
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    try:
        frames = tuple(
            FrameRecord(image=r["image"], mask=r.get("mask"), depth=r.get("depth"))
            for r in doc["frames"]
        )
        return SequenceManifest(
            sequence_id=doc["sequence_id"],
            frames=frames,
            annotated=tuple(doc["annotated"]),
            num_objects=int(doc["num_objects"]),
            root=path.parent,
        )
    except (KeyError, TypeError) as e:
        raise DataError(f"malformed manifest {path}: {e}") from e


def _read_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.array(im.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as e:
        raise DataError(f"unreadable image {path}: {e}") from e


def _read_mask(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode not in ("P", "L"):
                im = im.convert("P")
            return np.array(im, dtype=np.int32)
    except OSError as e:
        raise DataError(f"unreadable mask {path}: {e}") from e


def _read_depth(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.array(im)
    except OSError as e:
        raise DataError(f"unreadable depth map {path}: {e}") from e
    if arr.dtype == np.uint16 or arr.dtype == np.int32:
        return arr.astype(np.float32) / 65535.0
    return arr.astype(np.float32) / 255.0


def load_sequence(
    manifest: SequenceManifest, pad: int = 16
) -> tuple[list[Frame], dict[int, MaskMap], list[Tensor | None]]:
    """Load and pad every frame; masks keyed by frame index (annotated only)."""
    frames: list[Frame] = []
    masks: dict[int, MaskMap] = {}
    depths: list[Tensor | None] = []
    annotated = set(manifest.annotated)
    for idx, rec in enumerate(manifest.frames):
        img = _read_image(manifest.root / rec.image)
        frame = pad_to_multiple(np.transpose(img, (2, 0, 1)), pad)
        frames.append(frame)
        if rec.mask is not None and not (manifest.root / rec.mask).is_file():
            if idx in annotated:
                raise DataError(
                    f"{manifest.sequence_id}: annotated frame {idx} has no mask file"
                )
            rec = FrameRecord(image=rec.image, mask=None, depth=rec.depth)
        if rec.mask is not None:
            raw = _read_mask(manifest.root / rec.mask)
            if raw.shape != (frame.orig_h, frame.orig_w):
                raise DataError(
                    f"{manifest.sequence_id} frame {idx}: mask {raw.shape} does not match "
                    f"image {(frame.orig_h, frame.orig_w)}"
                )
            if raw.max(initial=0) > manifest.num_objects:
                raise DataError(
                    f"{manifest.sequence_id} frame {idx}: mask value {int(raw.max())} exceeds "
                    f"num_objects={manifest.num_objects}"
                )
            masks[idx] = MaskMap(
                labels=pad_mask_to_multiple(raw, pad), num_objects=manifest.num_objects
            )
        elif idx in annotated:
            raise DataError(f"{manifest.sequence_id}: annotated frame {idx} has no mask file")
        if rec.depth is not None:
            d = _read_depth(manifest.root / rec.depth)
            if d.shape != (frame.orig_h, frame.orig_w):
                raise DataError(
                    f"{manifest.sequence_id} frame {idx}: depth {d.shape} does not match image"
                )
            H, W = frame.H, frame.W
            d = np.pad(d, ((0, H - d.shape[0]), (0, W - d.shape[1])), mode="symmetric")
            depths.append(torch.from_numpy(np.ascontiguousarray(d)))
        else:
            depths.append(None)
    return frames, masks, depths


@dataclass(frozen=True)
class LoadedSequence:
    """A fully materialized sequence: frames, annotated masks, depth maps."""

    manifest: SequenceManifest
    frames: tuple[Frame, ...]
    masks: dict[int, MaskMap]
    depths: tuple[Tensor | None, ...]


def load_all(manifests) -> list[LoadedSequence]:
    out = []
    for m in manifests:
        frames, masks, depths = load_sequence(m)
        out.append(
            LoadedSequence(manifest=m, frames=tuple(frames), masks=masks, depths=tuple(depths))
        )
    return out


def sample_pseudo_video(
    annotated, n_frames: int, max_skip: int, rng: np.random.Generator
) -> list[int]:
    """Sample frame indices for a short pseudo-training video.

    The start is uniform over annotated positions that leave room; each step
    advances by a positional gap drawn uniformly from {1, ..., max_skip}
    within the annotated list (clamped at the end), so max_skip=1 yields runs
    of consecutive annotated frames.
    """
    annotated = sorted(annotated)
    if n_frames < 2:
        raise ValueError("pseudo-videos need at least 2 frames")
    if max_skip < 1:
        raise ValueError("max_skip must be >= 1")
    if len(annotated) < n_frames:
        raise ValueError(
            f"cannot sample {n_frames} frames from {len(annotated)} annotated frames"
        )
    last = len(annotated) - 1
    pos = int(rng.integers(0, len(annotated) - n_frames + 1))
    positions = [pos]
    for step in range(n_frames - 1):
        gap = int(rng.integers(1, max_skip + 1))
        room = (last - positions[-1]) - (n_frames - 2 - step)
        positions.append(positions[-1] + min(gap, room))
    return [annotated[p] for p in positions]


# ---------------------------------------------------------------------------
# synthetic occlusion videos


@dataclass(frozen=True)
class SynthConfig:
    height: int = 64
    width: int = 64
    n_frames: int = 24
    n_objects: int = 2  # annotated targets, 1..3
    n_distractors: int = 2  # similar-colored occluders, rendered nearer
    n_camouflage: int = 2  # target-colored static patches in the background
    shapes: tuple[str, ...] = SHAPES
    occluder_amplitude: float = 3.0  # sinusoidal wiggle of occluder paths, px
    shake_amplitude: float = 1.0  # egocentric camera shake, px
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_objects <= 3:
            raise ValueError("object count must be in 1..3")
        if self.n_frames < 2:
            raise ValueError("need at least 2 frames")
        if any(s not in SHAPES for s in self.shapes):
            raise ValueError(f"shapes must be among {SHAPES}")


@dataclass(frozen=True)
class _Body:
    shape: str
    radius: float
    color: np.ndarray  # [3]
    depth: float  # inverse depth: larger = nearer
    start: np.ndarray  # [2] (y, x)
    velocity: np.ndarray  # [2] per frame
    amp: np.ndarray  # [2] sinusoidal amplitude
    freq: float
    phase: float
    label: int  # 0 for occluders

    def center(self, t: float) -> np.ndarray:
        return self.start + self.velocity * t + self.amp * math.sin(2 * math.pi * self.freq * t + self.phase)


def _membership(body: _Body, cy: float, cx: float, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    r = body.radius
    if body.shape == "disk":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r**2
    if body.shape == "square":
        return np.maximum(np.abs(yy - cy), np.abs(xx - cx)) <= r
    # upward triangle with apex at (cy - r, cx)
    inside_y = (yy >= cy - r) & (yy <= cy + r)
    half_width = (yy - (cy - r)) / 2.0
    return inside_y & (np.abs(xx - cx) <= half_width)


def _make_bodies(cfg: SynthConfig, rng: np.random.Generator) -> list[_Body]:
    H, W, T = cfg.height, cfg.width, cfg.n_frames
    margin = 12.0
    bodies: list[_Body] = []
    palette = rng.permutation(np.array([
        [0.85, 0.25, 0.25], [0.25, 0.65, 0.85], [0.35, 0.8, 0.35],
        [0.85, 0.7, 0.25], [0.7, 0.35, 0.8],
    ]))
    for i in range(cfg.n_objects):
        start = rng.uniform([margin, margin], [H - margin, W - margin])
        drift = rng.uniform(-18.0, 18.0, 2)
        end = np.clip(start + drift, margin, [H - margin, W - margin])
        bodies.append(
            _Body(
                shape=cfg.shapes[int(rng.integers(0, len(cfg.shapes)))],
                radius=float(rng.uniform(7.0, 10.0)),
                color=np.clip(palette[i] + rng.uniform(-0.04, 0.04, 3), 0.0, 1.0),
                depth=float(rng.uniform(0.35, 0.55)),
                start=start,
                velocity=(end - start) / max(T - 1, 1),
                amp=rng.uniform(0.8, 2.0, 2),
                freq=float(rng.uniform(0.5, 1.5)) / T,
                phase=float(rng.uniform(0, 2 * math.pi)),
                label=i + 1,
            )
        )
    for j in range(cfg.n_distractors):
        target = bodies[j % cfg.n_objects]
        t_cross = float(rng.uniform(0.35, 0.7)) * (T - 1)
        aim = target.center(t_cross)
        # launch from a lateral offset and converge slowly: the occluder
        # co-travels with its target instead of flying past
        direction = target.velocity / (np.linalg.norm(target.velocity) + 1e-6)
        perp = np.array([-direction[1], direction[0]])
        sign = 1.0 if rng.random() < 0.5 else -1.0
        start = target.start + sign * perp * rng.uniform(16.0, 24.0) + rng.uniform(-3.0, 3.0, 2)
        start = np.clip(start, 2.0, [H - 2.0, W - 2.0])
        bodies.append(
            _Body(
                # same shape, size and (near-identical) color as the target:
                # RGB alone cannot separate the pair, the depth layer can
                shape=target.shape,
                radius=float(target.radius * rng.uniform(0.9, 1.1)),
                color=np.clip(target.color + rng.uniform(-0.015, 0.015, 3), 0.0, 1.0),
                depth=float(rng.uniform(0.78, 0.95)),  # nearer than any target
                start=start,
                velocity=(aim - start) / max(t_cross, 1.0),
                amp=rng.uniform(0.3, 1.0, 2) * cfg.occluder_amplitude,
                freq=float(rng.uniform(0.5, 1.5)) / T,
                phase=float(rng.uniform(0, 2 * math.pi)),
                label=0,
            )
        )
    for j in range(cfg.n_camouflage):
        target = bodies[j % cfg.n_objects]
        # static target-colored patch lodged in the background: camouflage
        # clutter that only the depth layer tells apart from a real target
        bodies.append(
            _Body(
                shape=target.shape,
                radius=float(target.radius * rng.uniform(0.85, 1.05)),
                color=np.clip(target.color + rng.uniform(-0.02, 0.02, 3), 0.0, 1.0),
                depth=float(rng.uniform(0.12, 0.2)),  # just above the backdrop
                start=rng.uniform([margin, margin], [H - margin, W - margin]),
                velocity=np.zeros(2),
                amp=np.zeros(2),
                freq=0.0,
                phase=0.0,
                label=0,
            )
        )
    return bodies


def render_sequence(cfg: SynthConfig) -> dict[str, np.ndarray]:
    """Render a clip in memory: frames [T,3,H,W], masks [T,H,W], depth [T,H,W].

    Deterministic per (config, seed). Depth is inverse depth of the topmost
    surface (painter's rule: the nearer body wins every contested pixel).
    """
    rng = np.random.default_rng(cfg.seed)
    H, W, T = cfg.height, cfg.width, cfg.n_frames
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    bodies = sorted(_make_bodies(cfg, rng), key=lambda b: b.depth)  # far -> near
    base = rng.uniform(0.35, 0.55, 3)
    grad = rng.uniform(-0.15, 0.15, (3, 2))
    tex_freq = rng.uniform(0.05, 0.12, 2)
    tex_phase = rng.uniform(0, 2 * math.pi)
    shake_freq = rng.uniform(0.5, 2.0, 2)
    shake_phase = rng.uniform(0, 2 * math.pi, 2)
    bg_depth = 0.08 + 0.04 * (yy / H)

    frames = np.zeros((T, 3, H, W), dtype=np.float32)
    masks = np.zeros((T, H, W), dtype=np.uint8)
    depths = np.zeros((T, H, W), dtype=np.float32)
    for t in range(T):
        shake = cfg.shake_amplitude * np.sin(
            2 * math.pi * shake_freq * t / max(T - 1, 1) + shake_phase
        )
        sy, sx = shake
        img = np.empty((3, H, W), dtype=np.float64)
        tex = 0.05 * np.sin(2 * math.pi * ((yy + sy) * tex_freq[0] + (xx + sx) * tex_freq[1]) + tex_phase)
        for c in range(3):
            img[c] = base[c] + grad[c, 0] * (yy + sy) / H + grad[c, 1] * (xx + sx) / W + tex
        label = np.zeros((H, W), dtype=np.uint8)
        depth = bg_depth.copy()
        for body in bodies:  # far to near: nearer bodies overwrite
            cy, cx = body.center(t) + shake
            inside = _membership(body, cy, cx, yy, xx)
            for c in range(3):
                img[c][inside] = body.color[c]
            label[inside] = body.label
            depth[inside] = body.depth
        frames[t] = np.clip(img, 0.0, 1.0).astype(np.float32)
        masks[t] = label
        depths[t] = depth.astype(np.float32)
    return {"frames": frames, "masks": masks, "depths": depths}


def mask_palette() -> list[int]:
    """256-entry RGB palette for mask PNGs; index = object id."""
    colors = [
        (0, 0, 0), (128, 0, 0), (0, 128, 0), (128, 128, 0), (0, 0, 128),
        (128, 0, 128), (0, 128, 128), (128, 128, 128), (64, 0, 0), (191, 0, 0),
    ]
    flat: list[int] = []
    for i in range(256):
        r, g, b = colors[i % len(colors)] if i < len(colors) else ((i * 37) % 256, (i * 91) % 256, (i * 139) % 256)
        flat.extend([r, g, b])
    return flat


def save_mask_png(labels: np.ndarray, path) -> None:
    im = Image.fromarray(labels.astype(np.uint8), mode="P")
    im.putpalette(mask_palette())
    im.save(path)


def save_depth_png(depth01: np.ndarray, path) -> None:
    arr = np.clip(np.round(depth01 * 65535.0), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path)  # uint16 -> 16-bit grayscale PNG


def synth_video(cfg: SynthConfig, out_dir) -> SequenceManifest:
    """Render a clip and materialize it as a manifest-led sequence directory."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    (out / "depth").mkdir(exist_ok=True)
    clip = render_sequence(cfg)
    records = []
    for t in range(cfg.n_frames):
        img = (np.transpose(clip["frames"][t], (1, 2, 0)) * 255.0).round().astype(np.uint8)
        Image.fromarray(img).save(out / "frames" / f"{t:05d}.png")
        save_mask_png(clip["masks"][t], out / "masks" / f"{t:05d}.png")
        save_depth_png(clip["depths"][t], out / "depth" / f"{t:05d}.png")
        records.append(
            FrameRecord(
                image=f"frames/{t:05d}.png",
                mask=f"masks/{t:05d}.png",
                depth=f"depth/{t:05d}.png",
            )
        )
    manifest = SequenceManifest(
        sequence_id=f"synth-{cfg.seed:04d}",
        frames=tuple(records),
        annotated=tuple(range(cfg.n_frames)),
        num_objects=cfg.n_objects,
        root=out,
    )
    save_manifest(manifest, out / "manifest.json")
    return manifest


def synth_dataset(root, n_sequences: int, base_seed: int, cfg: SynthConfig | None = None) -> list[SequenceManifest]:
    """A family of clips with consecutive seeds under one directory."""
    cfg = cfg or SynthConfig()
    manifests = []
    for k in range(n_sequences):
        c = replace(cfg, seed=base_seed + k)
        manifests.append(synth_video(c, Path(root) / f"synth-{c.seed:04d}"))
    return manifests


def discover_manifests(root) -> list[SequenceManifest]:
    """All manifest.json files under ``root``, sorted by sequence id."""
    root = Path(root)
    if (root / "manifest.json").is_file():
        return [load_manifest(root / "manifest.json")]
    found = sorted(root.glob("*/manifest.json"))
    if not found:
        raise DataError(f"no manifest.json found under {root}")
    return sorted((load_manifest(p) for p in found), key=lambda m: m.sequence_id)


def convert_external_layout(
    root,
    sequence_id: str,
    num_objects: int,
    images: str = "JPEGImages",
    masks: str = "Annotations",
    depth: str | None = None,
) -> SequenceManifest:
    """Map a conventional frames-dir/annotations-dir layout onto a manifest.

    External datasets keep numbered image files in one directory and sparse
    palette masks in another; frames are matched to masks by stem. Anything
    beyond that (native annotation JSON, multi-part layouts) is an extension
    point: build the SequenceManifest yourself and ``save_manifest`` it.
    """
    root = Path(root)
    img_dir = root / images
    if not img_dir.is_dir():
        raise DataError(f"no image directory at {img_dir}")
    mask_dir = root / masks
    depth_dir = root / depth if depth is not None else None
    records = []
    annotated = []
    frames = sorted(img_dir.iterdir())
    if not frames:
        raise DataError(f"{img_dir} is empty")
    for idx, img in enumerate(frames):
        mask_path = mask_dir / f"{img.stem}.png"
        depth_path = depth_dir / f"{img.stem}.png" if depth_dir is not None else None
        has_mask = mask_path.is_file()
        if has_mask:
            annotated.append(idx)
        records.append(
            FrameRecord(
                image=str(img.relative_to(root)),
                mask=str(mask_path.relative_to(root)) if has_mask else None,
                depth=str(depth_path.relative_to(root))
                if depth_path is not None and depth_path.is_file()
                else None,
            )
        )
    return SequenceManifest(
        sequence_id=sequence_id,
        frames=tuple(records),
        annotated=tuple(annotated),
        num_objects=num_objects,
        root=root,
    )
