"""Hierarchical feature extraction: part-space projections, self-attended
scene context, and pooled global descriptors.

Three complementary paths come out of here:
  - part path: point features mapped to a body-part response space (F_hp)
    and image features mapped to a matching part embedding (F_p_hat), with
    an upsampling head that predicts the full-resolution part mask;
  - scene path: the raw scene grid self-attended over its spatial tokens
    (F_i_hat);
  - global path: spatial mean of the attended scene grid (F_ig) and a
    symmetric pooling of the point features (F_hg).
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


class PartPointProjector(nn.Module):
    """Pointwise MLP mapping point features [C, N_p] into part space [J, N_p]."""

    def __init__(self, in_channels: int, num_parts: int, hidden: int = 64):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_channels, hidden), nn.ReLU(inplace=True),
            nn.Linear(hidden, hidden), nn.ReLU(inplace=True),
            nn.Linear(hidden, num_parts),
        )

    def forward(self, f_h: torch.Tensor) -> torch.Tensor:
        return self.net(f_h.transpose(0, 1)).transpose(0, 1)  # [J, N_p]


class PartImageProjector(nn.Module):
    """Composite conv (conv + BN + ReLU) mapping the part grid [C, H', W']
    into the part embedding [J_c, H', W']. ReLU keeps outputs nonnegative."""

    def __init__(self, in_channels: int, part_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, part_channels, 3, padding=1)
        self.bn = nn.BatchNorm2d(part_channels)

    def forward(self, f_p: torch.Tensor) -> torch.Tensor:
        x = f_p.unsqueeze(0)
        return F.relu(self.bn(self.conv(x))).squeeze(0)


class SceneSelfAttention(nn.Module):
    """Single-head self-attention over the H'*W' spatial tokens of the scene
    grid. Output channels match the input, so the attended grid is a convex
    mix of per-token value projections."""

    def __init__(self, channels: int, attention_dim: int):
        super().__init__()
        self.scale = 1.0 / math.sqrt(attention_dim)
        self.q = nn.Linear(channels, attention_dim, bias=False)
        self.k = nn.Linear(channels, attention_dim, bias=False)
        self.v = nn.Linear(channels, channels, bias=False)

    def forward(self, f_i: torch.Tensor) -> torch.Tensor:
        c, h, w = f_i.shape
        tokens = f_i.reshape(c, h * w).transpose(0, 1)  # [T, C]
        attn = torch.softmax(self.q(tokens) @ self.k(tokens).transpose(0, 1) * self.scale, dim=-1)
        out = attn @ self.v(tokens)  # [T, C]
        return out.transpose(0, 1).reshape(c, h, w)

    def attention_rows(self, f_i: torch.Tensor) -> torch.Tensor:
        """The [T, T] attention matrix, exposed for invariant checks."""
        c, h, w = f_i.shape
        tokens = f_i.reshape(c, h * w).transpose(0, 1)
        return torch.softmax(self.q(tokens) @ self.k(tokens).transpose(0, 1) * self.scale, dim=-1)


def pool_globals(f_i_attended: torch.Tensor, f_h: torch.Tensor,
                 point_pool: str = "max") -> tuple[torch.Tensor, torch.Tensor]:
    """Global descriptors: spatial mean of the attended scene grid and a
    symmetric pool over point features.

    Max is the default point pool (exactly order-independent); mean is kept
    as a config alternative for ablations. Returns ([1, C], [1, C]).
    """
    f_ig = f_i_attended.mean(dim=(1, 2)).unsqueeze(0)
    if point_pool == "max":
        f_hg = f_h.amax(dim=1).unsqueeze(0)
    elif point_pool == "mean":
        f_hg = f_h.mean(dim=1).unsqueeze(0)
    else:
        raise ValueError(f"unknown point_pool {point_pool!r}")
    return f_ig, f_hg


def bilinear_upsample(x: torch.Tensor, factor: int) -> torch.Tensor:
    """Bilinear upsampling by an integer factor (align_corners=False)."""
    return F.interpolate(x.unsqueeze(0), scale_factor=factor, mode="bilinear",
                         align_corners=False).squeeze(0)


class PartMaskDecoder(nn.Module):
    """Maps the part embedding back to full resolution as (J + 1)-class
    logits (background + parts)."""

    def __init__(self, part_channels: int, num_parts: int, stride: int):
        super().__init__()
        self.stride = stride
        self.refine = nn.Sequential(
            nn.Conv2d(part_channels, part_channels, 3, padding=1),
            nn.BatchNorm2d(part_channels),
            nn.ReLU(inplace=True),
        )
        self.classify = nn.Conv2d(part_channels, num_parts + 1, 1)

    def forward(self, f_p_hat: torch.Tensor) -> torch.Tensor:
        x = self.refine(f_p_hat.unsqueeze(0)).squeeze(0)
        logits = self.classify(x.unsqueeze(0)).squeeze(0)
        return bilinear_upsample(logits, self.stride)  # [J + 1, H, W]
