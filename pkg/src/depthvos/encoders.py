"""Visual and geometric encoders producing aligned feature pyramids.

The two streams use backbones with different token strides (the visual
hierarchy is 4-based, the geometric one patchifies at 14), so the geometric
input is resized such that its token grid lands exactly on the coarsest
visual scale; a DPT-style head then upsamples tokens x4/x2/x1 to reproduce
the 1/4, 1/8, 1/16 pyramid with no fractional interpolation of features.

Only the toy reference encoders are runnable here; large pretrained backbones
enter solely through the weight-archive interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn, Tensor

from .archive import load_state_dict
from .core import Frame, FeaturePyramid, ShapeError


class ConfigError(ValueError):
    """Raised for invalid encoder/model configuration."""


@dataclass(frozen=True)
class EncoderSpec:
    kind: str  # "toy-visual" | "toy-geometric" | "external"
    channels: tuple[int, int, int] = (32, 64, 128)
    patch: int | None = None  # token stride; defaults to 4 (visual) / 14 (geometric)
    weights_ref: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("toy-visual", "toy-geometric", "external"):
            raise ConfigError(f"unknown encoder kind {self.kind!r}")
        if any(c < 1 for c in self.channels):
            raise ConfigError("channel counts must be >= 1")
        if self.patch is None:
            object.__setattr__(self, "patch", 14 if self.kind == "toy-geometric" else 4)
        if self.patch not in (4, 8, 14, 16):
            raise ConfigError(f"patch stride {self.patch} not in (4, 8, 14, 16)")


def align_geometric_input(H: int, W: int, patch_g: int = 14) -> tuple[int, int]:
    """Input size for the geometric stream so its token grid is (H/16, W/16).

    Requires the padded frame size (multiples of 16); the result is exactly
    divisible by ``patch_g`` and monotone in H and W.
    """
    if H % 16 != 0 or W % 16 != 0:
        raise ShapeError(f"frame size {H}x{W} not padded to a multiple of 16")
    return patch_g * (H // 16), patch_g * (W // 16)


def _conv(cin: int, cout: int, stride: int = 1) -> nn.Conv2d:
    # replicate padding keeps constant inputs spatially constant and works on 1x1 grids
    return nn.Conv2d(cin, cout, 3, stride=stride, padding=1, padding_mode="replicate")


class ToyVisualEncoder(nn.Module):
    """Three conv stages reaching strides 4/8/16; a desk-scale visual backbone."""

    def __init__(self, channels: tuple[int, int, int] = (32, 64, 128), seed: int = 0):
        super().__init__()
        c1, c2, c3 = channels
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.stage1 = nn.Sequential(_conv(3, c1, 2), nn.ReLU(), _conv(c1, c1, 2), nn.ReLU())
            self.stage2 = nn.Sequential(_conv(c1, c2, 2), nn.ReLU(), _conv(c2, c2), nn.ReLU())
            self.stage3 = nn.Sequential(_conv(c2, c3, 2), nn.ReLU(), _conv(c3, c3), nn.ReLU())
        self.channels = tuple(channels)

    def forward(self, frame: Frame) -> FeaturePyramid:
        x = frame.data.unsqueeze(0).to(next(self.parameters()).dtype)
        f1 = self.stage1(x)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        return FeaturePyramid(f_s1=f1[0], f_s2=f2[0], f_s3=f3[0])


class ToyGeometricEncoder(nn.Module):
    """Patchifies an oracle depth map at the geometric stride, then upsamples
    tokens x4/x2/x1 with one 3x3 conv per scale to match the visual pyramid.

    Stands in for a depth backbone: it reads only ``aux_depth``, never RGB.
    """

    def __init__(self, channels: tuple[int, int, int] = (32, 64, 128), patch: int = 14, seed: int = 0):
        super().__init__()
        c1, c2, c3 = channels
        self.patch = patch
        with torch.random.fork_rng():
            torch.manual_seed(seed + 1)
            self.embed = nn.Conv2d(1, c3, kernel_size=patch, stride=patch)
            self.head1 = _conv(c3, c1)
            self.head2 = _conv(c3, c2)
            self.head3 = _conv(c3, c3)
        self.channels = tuple(channels)

    def forward(self, frame: Frame, aux_depth: Tensor | None) -> FeaturePyramid:
        if aux_depth is None:
            raise ConfigError("toy-geometric encoder needs aux_depth (oracle depth map)")
        if tuple(aux_depth.shape) != (frame.H, frame.W):
            raise ShapeError(
                f"aux_depth is {tuple(aux_depth.shape)}, frame is {(frame.H, frame.W)}"
            )
        hg, wg = align_geometric_input(frame.H, frame.W, self.patch)
        dtype = next(self.parameters()).dtype
        x = aux_depth.to(dtype).unsqueeze(0).unsqueeze(0)
        x = F.interpolate(x, size=(hg, wg), mode="bilinear", align_corners=False)
        tokens = self.embed(x)  # [1, C3, H/16, W/16]
        t1 = F.interpolate(tokens, scale_factor=4, mode="bilinear", align_corners=False)
        t2 = F.interpolate(tokens, scale_factor=2, mode="bilinear", align_corners=False)
        return FeaturePyramid(
            f_s1=self.head1(t1)[0], f_s2=self.head2(t2)[0], f_s3=self.head3(tokens)[0]
        )


def build_visual_encoder(spec: EncoderSpec) -> ToyVisualEncoder:
    if spec.kind == "external":
        raise ConfigError(
            "external visual backbones are not bundled; provide features through "
            "the weight-archive interface or use kind='toy-visual'"
        )
    if spec.kind != "toy-visual":
        raise ConfigError(f"{spec.kind!r} does not produce visual features")
    enc = ToyVisualEncoder(spec.channels, seed=spec.seed)
    if spec.weights_ref is not None:
        load_state_dict(spec.weights_ref, enc)
    return enc


def build_geometric_encoder(spec: EncoderSpec) -> ToyGeometricEncoder:
    if spec.kind == "external":
        raise ConfigError(
            "external geometric backbones are not bundled; provide features through "
            "the weight-archive interface or use kind='toy-geometric'"
        )
    if spec.kind != "toy-geometric":
        raise ConfigError(f"{spec.kind!r} does not produce geometric features")
    enc = ToyGeometricEncoder(spec.channels, patch=spec.patch, seed=spec.seed)
    if spec.weights_ref is not None:
        load_state_dict(spec.weights_ref, enc)
    return enc


def encode_visual(encoder, frame: Frame) -> FeaturePyramid:
    """Run the visual stream; accepts a built encoder or an EncoderSpec."""
    if isinstance(encoder, EncoderSpec):
        encoder = build_visual_encoder(encoder)
    with torch.no_grad():
        pyr = encoder(frame)
    pyr.validate_against(frame.H, frame.W)
    return pyr


def encode_geometric(encoder, frame: Frame, aux_depth: Tensor | None = None) -> FeaturePyramid:
    """Run the geometric stream; output sizes equal the visual pyramid's."""
    if isinstance(encoder, EncoderSpec):
        encoder = build_geometric_encoder(encoder)
    with torch.no_grad():
        pyr = encoder(frame, aux_depth)
    pyr.validate_against(frame.H, frame.W)
    return pyr
