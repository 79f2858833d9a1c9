"""Point decoder: feature propagation back to full resolution plus the
per-vertex contact head.

Mirrors the encoder level by level: at each step the coarser features are
carried onto the finer coordinates through the pyramid's precomputed
inverse-distance 3-NN stencil, concatenated with that level's skip
features, and refined by a pointwise MLP. The head maps the propagated
features to one logit per vertex; sigmoid gives the contact probability.
"""

import torch
import torch.nn as nn

from .encoders import PointEncoderConfig, PointwiseMLP
from .geometry import PointPyramid


def interpolate_features(features: torch.Tensor, idx: torch.Tensor,
                         weights: torch.Tensor) -> torch.Tensor:
    """IDW interpolation: features [n_src, C] onto queries via stencil
    (idx [n_q, k], weights [n_q, k]) -> [n_q, C]."""
    gathered = features[idx]                     # [n_q, k, C]
    return (gathered * weights.unsqueeze(-1)).sum(dim=1)


class FeaturePropagation(nn.Module):
    """Walks the pyramid coarse-to-fine, returning per-vertex features [N, C_out]."""

    def __init__(self, cfg: PointEncoderConfig, in_channels: int, out_channels: int):
        super().__init__()
        skip_channels = [cfg.skip0_channels] + [l.channels for l in cfg.levels]
        blocks = []
        c_carry = in_channels
        for lvl in range(len(cfg.levels) - 1, -1, -1):
            c_out = out_channels if lvl == 0 else skip_channels[lvl]
            blocks.append(PointwiseMLP([c_carry + skip_channels[lvl], c_out, c_out]))
            c_carry = c_out
        self.blocks = nn.ModuleList(blocks)

    def forward(self, fused: torch.Tensor, skips: list[torch.Tensor],
                pyramid: PointPyramid) -> torch.Tensor:
        if len(skips) != len(pyramid.levels):
            raise ValueError("skip state does not match pyramid depth")
        feats = fused.transpose(0, 1)  # [N_p, C]
        n_levels = len(pyramid.levels)
        for step, block in enumerate(self.blocks):
            lvl = n_levels - 2 - step  # target level for this step
            idx, w = pyramid.interp[lvl]
            carried = interpolate_features(feats, idx, w)
            feats = block(torch.cat([carried, skips[lvl]], dim=-1))
        return feats  # [N, out_channels]


class ContactHead(nn.Module):
    """Pointwise MLP -> one logit per vertex."""

    def __init__(self, in_channels: int):
        super().__init__()
        self.hidden = nn.Linear(in_channels, in_channels)
        self.act = nn.ReLU(inplace=True)
        self.out = nn.Linear(in_channels, 1)

    def forward(self, per_vertex: torch.Tensor) -> torch.Tensor:
        x = self.act(self.hidden(per_vertex))
        return self.out(x).squeeze(-1)  # [N] logits
