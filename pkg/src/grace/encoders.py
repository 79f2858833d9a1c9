"""Raw feature extraction: two image feature grids and hierarchical point features.

The image side is a small strided CNN trained from scratch (one trunk per
stream by default, optionally shared). The point side is a set-abstraction
stack driven by a precomputed PointPyramid: gather neighbors, run a shared
pointwise MLP on [feature, relative-offset] pairs, max-pool per group.

Point-branch MLPs normalize per point (LayerNorm over channels), never
across points, so every feature is an exact function of its own geometry
regardless of vertex order or train/eval mode.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .geometry import PointPyramid


@dataclass(frozen=True)
class ImageEncoderConfig:
    stage_channels: tuple[int, ...] = (16, 32, 64)  # one stride-2 stage each
    out_channels: int = 64
    shared_trunk: bool = False
    padding_mode: str = "zeros"  # "circular" turns the net into a shift-equivariant test rig

    @property
    def total_stride(self) -> int:
        return 2 ** len(self.stage_channels)


@dataclass(frozen=True)
class PointLevel:
    n_sampled: int
    radius: float
    neighbors_k: int
    channels: int


@dataclass(frozen=True)
class PointEncoderConfig:
    levels: tuple[PointLevel, ...] = (
        PointLevel(128, 0.25, 16, 64),
        PointLevel(32, 0.50, 16, 64),
    )
    lift_channels: int = 16      # pointwise embedding of raw coords at level 0
    fourier_frequencies: int = 0  # optional sin/cos coordinate bands in the level-0 skip

    def __post_init__(self):
        counts = [l.n_sampled for l in self.levels]
        radii = [l.radius for l in self.levels]
        if any(b >= a for a, b in zip(counts, counts[1:])):
            raise ValueError(f"n_sampled must strictly decrease per level, got {counts}")
        if any(b < a for a, b in zip(radii, radii[1:])):
            raise ValueError(f"radii must not decrease, got {radii}")

    @property
    def out_channels(self) -> int:
        return self.levels[-1].channels

    @property
    def skip0_channels(self) -> int:
        return 3 + 6 * self.fourier_frequencies + self.lift_channels

    def geometry_spec(self) -> list[tuple[int, float, int]]:
        return [(l.n_sampled, l.radius, l.neighbors_k) for l in self.levels]


def fourier_features(coords: torch.Tensor, n_frequencies: int) -> torch.Tensor:
    """Octave sin/cos coordinate bands, [N, 6 * n_frequencies].

    Plain MLPs on raw 3D coordinates are spectrally biased toward smooth
    functions; the extra bands let the per-vertex decoder resolve sharp
    label boundaries. Pointwise, so exactly permutation-equivariant.
    """
    if n_frequencies == 0:
        return coords.new_zeros((coords.shape[0], 0))
    freqs = coords.new_tensor([2.0 ** k * math.pi for k in range(n_frequencies)])
    angles = coords.unsqueeze(-1) * freqs            # [N, 3, F]
    feats = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    return feats.reshape(coords.shape[0], -1)


def _trunk(cfg: ImageEncoderConfig) -> nn.Sequential:
    layers: list[nn.Module] = []
    c_in = 3
    for c_out in cfg.stage_channels:
        layers += [
            nn.Conv2d(c_in, c_out, 3, stride=2, padding=1, padding_mode=cfg.padding_mode),
            nn.BatchNorm2d(c_out),
            nn.ReLU(inplace=True),
        ]
        c_in = c_out
    return nn.Sequential(*layers)


class ImageEncoder(nn.Module):
    """Produces the scene grid F_i and the part grid F_p, both [C, H', W'].

    With with_part_stream=False the part trunk/head are never created and
    forward returns (F_i, None).
    """

    def __init__(self, cfg: ImageEncoderConfig, with_part_stream: bool = True):
        super().__init__()
        self.cfg = cfg
        self.trunk_scene = _trunk(cfg)
        c_last = cfg.stage_channels[-1]
        self.head_scene = nn.Conv2d(c_last, cfg.out_channels, 1)
        self.trunk_part = None
        self.head_part = None
        if with_part_stream:
            self.trunk_part = self.trunk_scene if cfg.shared_trunk else _trunk(cfg)
            self.head_part = nn.Conv2d(c_last, cfg.out_channels, 1)

    def forward(self, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if image.dim() == 3:
            image = image.unsqueeze(0)
        h, w = image.shape[-2:]
        stride = self.cfg.total_stride
        if h % stride or w % stride:
            raise ValueError(f"image size {h}x{w} not divisible by encoder stride {stride}")
        f_scene = self.head_scene(self.trunk_scene(image)).squeeze(0)
        f_part = None
        if self.head_part is not None:
            f_part = self.head_part(self.trunk_part(image)).squeeze(0)
        return f_scene, f_part  # [C, H', W'] each


class PointwiseMLP(nn.Module):
    """Linear (-> LayerNorm) -> ReLU blocks applied along the last dim.

    LayerNorm acts per point across channels, never across points. It is
    skippable (norm=False) where absolute feature scale must survive, e.g.
    in the decoder, since normalizing a point's channel vector discards its
    magnitude.
    """

    def __init__(self, channels: list[int], final_activation: bool = True,
                 norm: bool = True):
        super().__init__()
        layers: list[nn.Module] = []
        for i, (a, b) in enumerate(zip(channels, channels[1:])):
            layers.append(nn.Linear(a, b))
            last = i == len(channels) - 2
            if not last or final_activation:
                if norm:
                    layers.append(nn.LayerNorm(b))
                layers.append(nn.ReLU(inplace=True))
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class PointEncoder(nn.Module):
    """Set-abstraction encoder over a precomputed pyramid.

    forward() returns (features at the coarsest level [C, N_p],
    per-level skip features [c_l, n_l] for the decoder).
    """

    def __init__(self, cfg: PointEncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.lift = PointwiseMLP([3, cfg.lift_channels])
        blocks = []
        c_prev = cfg.skip0_channels
        for level in cfg.levels:
            blocks.append(PointwiseMLP([c_prev + 3, level.channels, level.channels]))
            c_prev = level.channels
        self.blocks = nn.ModuleList(blocks)

    def forward(self, pyramid: PointPyramid) -> tuple[torch.Tensor, list[torch.Tensor]]:
        if len(pyramid.levels) != len(self.cfg.levels) + 1:
            raise ValueError("pyramid level count does not match encoder config")
        coords0 = pyramid.levels[0].coords
        # raw coordinates and their fourier bands ride along with the lifted
        # embedding: layer-normed features alone are nearly scale-free per
        # point, which starves the decoder of absolute position
        feats = torch.cat([
            coords0,
            fourier_features(coords0, self.cfg.fourier_frequencies),
            self.lift(coords0),
        ], dim=-1)  # [N, skip0_channels]
        skips = [feats]
        for block, level in zip(self.blocks, pyramid.levels[1:]):
            prev_coords = pyramid.levels[len(skips) - 1].coords
            grouped = feats[level.neighbor_idx]                       # [n, k, c_prev]
            offsets = prev_coords[level.neighbor_idx] - level.coords.unsqueeze(1)
            grouped = torch.cat([grouped, offsets], dim=-1)           # [n, k, c_prev + 3]
            feats = block(grouped).amax(dim=1)                        # [n, c_out]
            skips.append(feats)
        return feats.transpose(0, 1), skips  # [C, N_p], list of [n_l, c_l]
