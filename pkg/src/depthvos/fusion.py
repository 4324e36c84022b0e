"""Per-scale fusion of the visual and geometric streams.

At each pyramid scale, visual and geometric features are concatenated along
channels and pushed through a small pointwise perceptron (receptive field 1,
no spatial mixing). The fused output keeps the visual channel widths, so the
downstream decoder is indifferent to whether fusion is enabled at all — the
RGB-only ablation simply bypasses this module.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn, Tensor

from .core import FeaturePyramid, ShapeError


class FusionScale(nn.Module):
    """Pointwise MLP for one scale: out = w2 @ relu(w1 @ x + b1) + b2.

    With ``depth=1`` it degenerates to a single linear map (w1, b1 only).
    """

    def __init__(self, cin: int, cout: int, hidden: int | None = None, depth: int = 2):
        super().__init__()
        if depth not in (1, 2):
            raise ValueError("fusion depth must be 1 or 2")
        self.depth = depth
        hidden = cout if hidden is None else hidden
        if depth == 1:
            self.w1 = nn.Parameter(torch.empty(cout, cin))
            self.b1 = nn.Parameter(torch.zeros(cout))
        else:
            self.w1 = nn.Parameter(torch.empty(hidden, cin))
            self.b1 = nn.Parameter(torch.zeros(hidden))
            self.w2 = nn.Parameter(torch.empty(cout, hidden))
            self.b2 = nn.Parameter(torch.zeros(cout))

    def forward(self, x: Tensor) -> Tensor:
        # x: [C, h, w]; conv1x1 applies the same map at every location
        y = F.conv2d(x.unsqueeze(0), self.w1[:, :, None, None], self.b1)
        if self.depth == 2:
            y = F.relu(y)
            y = F.conv2d(y, self.w2[:, :, None, None], self.b2)
        return y[0]


class FusionModule(nn.Module):
    """One FusionScale per pyramid level, serialized as fusion.s{1,2,3}.*"""

    def __init__(
        self,
        visual_channels: tuple[int, int, int],
        geometric_channels: tuple[int, int, int],
        out_channels: tuple[int, int, int] | None = None,
        depth: int = 2,
    ):
        super().__init__()
        out_channels = tuple(out_channels or visual_channels)
        self.out_channels = out_channels
        for i, (cv, cg, co) in enumerate(zip(visual_channels, geometric_channels, out_channels), 1):
            self.add_module(f"s{i}", FusionScale(cv + cg, co, depth=depth))

    def scales(self) -> tuple[FusionScale, FusionScale, FusionScale]:
        return (self.s1, self.s2, self.s3)

    def forward(self, fv: FeaturePyramid, fg: FeaturePyramid) -> FeaturePyramid:
        fused = []
        for scale, v, g in zip(self.scales(), fv.maps(), fg.maps()):
            if v.shape[1:] != g.shape[1:]:
                raise ShapeError(
                    f"visual {tuple(v.shape[1:])} and geometric {tuple(g.shape[1:])} "
                    "features are spatially misaligned; the geometric input resize "
                    "rule was not applied upstream"
                )
            fused.append(scale(torch.cat([v, g], dim=0)))
        return FeaturePyramid(f_s1=fused[0], f_s2=fused[1], f_s3=fused[2])


def fuse_pyramids(fv: FeaturePyramid, fg: FeaturePyramid, params: FusionModule) -> FeaturePyramid:
    return params(fv, fg)


def init_fusion(
    visual_channels: tuple[int, int, int],
    geometric_channels: tuple[int, int, int],
    seed: int,
    out_channels: tuple[int, int, int] | None = None,
    depth: int = 2,
) -> FusionModule:
    """Fresh fusion parameters: zero-mean weights with std 1/sqrt(fan_in),
    zero biases; deterministic per seed."""
    module = FusionModule(visual_channels, geometric_channels, out_channels, depth)
    gen = torch.Generator().manual_seed(seed)
    for name, p in module.named_parameters():
        if p.ndim >= 2:
            fan_in = p.shape[1]
            with torch.no_grad():
                p.copy_(torch.randn(p.shape, generator=gen) / fan_in**0.5)
        else:
            with torch.no_grad():
                p.zero_()
    return module
