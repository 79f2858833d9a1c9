"""Cross-modal fusion: two cross-attention streams plus global-feature fusion.

Stream 1 lets part-space point features query the image part embedding;
stream 2 lets raw point features query the attended scene grid. Both use
plain single-head attention with bias-free projections, so each output row
is a convex combination of projected image value tokens. The two streams
are concatenated with a repeated global vector and mixed by a pointwise
channel-fusion MLP into the fused per-point representation.
"""

import math
from typing import Optional

import torch
import torch.nn as nn


class CrossAttentionStream(nn.Module):
    """queries [Cq, N_p] x key/value source [Ckv, T] -> [N_p, d].

    heads > 1 splits the projection dim into equal slices with independent
    softmax weights per slice; heads = 1 is the plain single-head formula.
    """

    def __init__(self, query_channels: int, kv_channels: int, dim: int,
                 heads: int = 1):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.scale = 1.0 / math.sqrt(dim // heads)
        self.w_q = nn.Linear(query_channels, dim, bias=False)
        self.w_k = nn.Linear(kv_channels, dim, bias=False)
        self.w_v = nn.Linear(kv_channels, dim, bias=False)

    def _attention(self, queries: torch.Tensor, kv: torch.Tensor):
        if kv.shape[1] == 0:
            raise ValueError("cross-attention needs at least one key/value token")
        n_p, t = queries.shape[1], kv.shape[1]
        hd = self.dim // self.heads
        q = self.w_q(queries.transpose(0, 1)).reshape(n_p, self.heads, hd)
        k = self.w_k(kv.transpose(0, 1)).reshape(t, self.heads, hd)
        v = self.w_v(kv.transpose(0, 1)).reshape(t, self.heads, hd)
        scores = torch.einsum("nhd,thd->hnt", q, k) * self.scale
        attn = torch.softmax(scores, dim=-1)  # [heads, N_p, T]
        return attn, v

    def forward(self, queries: torch.Tensor, kv: torch.Tensor) -> torch.Tensor:
        attn, v = self._attention(queries, kv)
        out = torch.einsum("hnt,thd->nhd", attn, v)
        return out.reshape(queries.shape[1], self.dim)

    def attention_rows(self, queries: torch.Tensor, kv: torch.Tensor) -> torch.Tensor:
        """[heads * N_p, T] attention rows, for invariant checks."""
        attn, _ = self._attention(queries, kv)
        return attn.reshape(-1, kv.shape[1])


class GlobalFusion(nn.Module):
    """Concatenate the two global descriptors and refine with a small MLP."""

    def __init__(self, channels: int, out_channels: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(2 * channels, out_channels), nn.ReLU(inplace=True),
            nn.Linear(out_channels, out_channels),
        )

    def forward(self, f_ig: torch.Tensor, f_hg: torch.Tensor) -> torch.Tensor:
        if f_ig.shape != f_hg.shape:
            raise ValueError(f"global widths differ: {f_ig.shape} vs {f_hg.shape}")
        return self.net(torch.cat([f_ig, f_hg], dim=-1))  # [1, C_g]


class FusedAssembler(nn.Module):
    """Pointwise channel fusion of [theta1 | theta2 | repeated global]."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_channels, out_channels), nn.ReLU(inplace=True),
            nn.Linear(out_channels, out_channels),
        )

    def forward(self, parts: list[torch.Tensor]) -> torch.Tensor:
        x = torch.cat(parts, dim=-1)  # [N_p, sum of widths]
        return self.net(x).transpose(0, 1)  # [C_f, N_p]


class FusionModule(nn.Module):
    """Full fusion stage.

    With the part branch disabled, stream 1 never exists; with the global
    branch disabled, the global slot is zero-filled at the assembler input
    (widths stay stable) and the fusion MLP is never created.
    """

    def __init__(self, point_channels: int, num_parts: int, part_channels: int,
                 scene_channels: int, dim: int, global_channels: int,
                 out_channels: int, use_part: bool = True, use_global: bool = True,
                 heads: int = 1):
        super().__init__()
        self.dim = dim
        self.global_channels = global_channels
        self.use_part = use_part
        self.use_global = use_global
        self.stream_part: Optional[CrossAttentionStream] = None
        if use_part:
            self.stream_part = CrossAttentionStream(num_parts, part_channels, dim, heads)
        self.stream_scene = CrossAttentionStream(point_channels, scene_channels, dim, heads)
        self.fuse_globals: Optional[GlobalFusion] = None
        if use_global:
            self.fuse_globals = GlobalFusion(scene_channels, global_channels)
        width = dim * (2 if use_part else 1) + global_channels
        self.assemble = FusedAssembler(width, out_channels)

    def forward(self, f_hp: Optional[torch.Tensor], f_h: torch.Tensor,
                f_p_hat: Optional[torch.Tensor], f_i_hat: torch.Tensor,
                f_ig: torch.Tensor, f_hg: torch.Tensor) -> dict:
        n_p = f_h.shape[1]
        kv_scene = f_i_hat.reshape(f_i_hat.shape[0], -1)  # [C, T]
        theta2 = self.stream_scene(f_h, kv_scene)         # [N_p, d]
        parts = []
        theta1 = None
        if self.stream_part is not None:
            kv_part = f_p_hat.reshape(f_p_hat.shape[0], -1)
            theta1 = self.stream_part(f_hp, kv_part)
            parts.append(theta1)
        parts.append(theta2)
        if self.fuse_globals is not None:
            f_g = self.fuse_globals(f_ig, f_hg)           # [1, C_g]
        else:
            f_g = theta2.new_zeros((1, self.global_channels))
        parts.append(f_g.expand(n_p, -1))                 # repeat across points
        fused = self.assemble(parts)                      # [C_f, N_p]
        return {"fused": fused, "theta1": theta1, "theta2": theta2, "global": f_g}
