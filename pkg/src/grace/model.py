"""The full contact-estimation network: image + point cloud in, per-vertex
contact probabilities out.

Forward path: encode both modalities, lift them into part/scene/global
representations, fuse with cross-attention, propagate back to full point
resolution, squeeze through the contact head. The cloud is re-centered and
rescaled before encoding; all geometric bookkeeping lives in a PointPyramid
that can be precomputed once per cloud and reused across steps.

Ablation switches:
    disable_part_branch   drops the part-space projections, the part-mask
                          decoder, and the part cross-attention stream
                          (parameter count shrinks accordingly)
    disable_global_branch drops the global-fusion MLP and feeds zeros into
                          the global slot of the fused representation
                          (widths stay stable)
"""

from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from .decoders import ContactHead, FeaturePropagation
from .encoders import ImageEncoder, ImageEncoderConfig, PointEncoder, PointEncoderConfig, PointLevel
from .geometry import PointPyramid, build_pyramid
from .hfem import (PartImageProjector, PartMaskDecoder, PartPointProjector,
                   SceneSelfAttention, pool_globals)
from .mffm import FusionModule
from .types import ContactPrediction, ImageInput, PointFeatures, normalize_cloud


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 64            # shared width of F_i, F_p, F_h
    num_parts: int = 24           # J
    part_channels: int = 64       # width of the image part embedding
    attention_dim: int = 64       # projection dim of all attention streams
    attention_heads: int = 1      # cross-attention head count
    global_channels: int = 64     # width of the fused global vector
    fused_channels: int = 64      # width of the fused per-point representation
    head_channels: int = 32       # per-vertex feature width before the head
    point_global_pool: str = "max"
    threshold: float = 0.5
    disable_part_branch: bool = False
    disable_global_branch: bool = False
    image: ImageEncoderConfig = field(default_factory=ImageEncoderConfig)
    points: PointEncoderConfig = field(default_factory=PointEncoderConfig)

    def __post_init__(self):
        if self.image.out_channels != self.channels:
            raise ValueError("image encoder out_channels must equal ModelConfig.channels")
        if self.points.out_channels != self.channels:
            raise ValueError("point encoder final channels must equal ModelConfig.channels")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image"]["stage_channels"] = list(self.image.stage_channels)
        d["points"]["levels"] = [list(asdict(l).values()) for l in self.points.levels]
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        img = dict(d.pop("image", {}))
        if "stage_channels" in img:
            img["stage_channels"] = tuple(img["stage_channels"])
        pts = dict(d.pop("points", {}))
        if "levels" in pts:
            pts["levels"] = tuple(PointLevel(*lv) for lv in pts["levels"])
        return ModelConfig(image=ImageEncoderConfig(**img),
                           points=PointEncoderConfig(**pts), **d)

    def ablated(self, disable_part: bool = False, disable_global: bool = False) -> "ModelConfig":
        return replace(self, disable_part_branch=disable_part or self.disable_part_branch,
                       disable_global_branch=disable_global or self.disable_global_branch)


def small_config(num_parts: int = 24) -> ModelConfig:
    """A compact configuration for CPU-scale experiments (stride-8 images of
    any divisible size)."""
    return ModelConfig(
        channels=32,
        num_parts=num_parts,
        part_channels=32,
        attention_dim=32,
        global_channels=32,
        fused_channels=32,
        head_channels=16,
        image=ImageEncoderConfig(stage_channels=(8, 16, 32), out_channels=32),
        points=PointEncoderConfig(levels=(
            PointLevel(128, 0.25, 12, 32),
            PointLevel(32, 0.50, 12, 32),
        ), lift_channels=8),
    )


class ContactNet(nn.Module):
    """End-to-end map from (image, human point cloud) to contact probabilities."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        use_part = not cfg.disable_part_branch
        use_global = not cfg.disable_global_branch

        self.image_encoder = ImageEncoder(cfg.image, with_part_stream=use_part)
        self.point_encoder = PointEncoder(cfg.points)
        self.scene_attention = SceneSelfAttention(cfg.channels, cfg.attention_dim)

        self.part_point = None
        self.part_image = None
        self.part_mask_decoder = None
        if use_part:
            self.part_point = PartPointProjector(cfg.channels, cfg.num_parts)
            self.part_image = PartImageProjector(cfg.channels, cfg.part_channels)
            self.part_mask_decoder = PartMaskDecoder(cfg.part_channels, cfg.num_parts,
                                                     cfg.image.total_stride)

        self.fusion = FusionModule(
            point_channels=cfg.channels,
            num_parts=cfg.num_parts,
            part_channels=cfg.part_channels,
            scene_channels=cfg.channels,
            dim=cfg.attention_dim,
            global_channels=cfg.global_channels,
            out_channels=cfg.fused_channels,
            use_part=use_part,
            use_global=use_global,
            heads=cfg.attention_heads,
        )
        self.propagate = FeaturePropagation(cfg.points, cfg.fused_channels, cfg.head_channels)
        self.head = ContactHead(cfg.head_channels)

    def forward(self, image: torch.Tensor, pyramid: PointPyramid) -> dict:
        f_i, f_p = self.image_encoder(image)
        f_h, skips = self.point_encoder(pyramid)
        f_i_hat = self.scene_attention(f_i)

        f_hp = f_p_hat = part_logits = None
        if self.part_point is not None:
            f_hp = self.part_point(f_h)
            f_p_hat = self.part_image(f_p)
            part_logits = self.part_mask_decoder(f_p_hat)

        f_ig, f_hg = pool_globals(f_i_hat, f_h, self.cfg.point_global_pool)
        fusion = self.fusion(f_hp, f_h, f_p_hat, f_i_hat, f_ig, f_hg)
        per_vertex = self.propagate(fusion["fused"], skips, pyramid)
        logits = self.head(per_vertex)
        return {
            "logits": logits,
            "probs": torch.sigmoid(logits),
            "part_logits": part_logits,
            "point_features": f_h,
            "fused": fusion["fused"],
        }

    # -- numpy-facing conveniences -------------------------------------------------

    def make_pyramid(self, points: np.ndarray) -> PointPyramid:
        normalized, _, _ = normalize_cloud(points)
        return build_pyramid(normalized, self.cfg.points.geometry_spec())

    @torch.no_grad()
    def predict(self, image_u8: np.ndarray, points: np.ndarray,
                threshold: Optional[float] = None,
                pyramid: Optional[PointPyramid] = None) -> ContactPrediction:
        self.eval()
        if pyramid is None:
            pyramid = self.make_pyramid(points)
        image = torch.from_numpy(ImageInput.from_u8(image_u8).pixels)
        out = self.forward(image, pyramid)
        return ContactPrediction.from_probs(
            out["probs"].numpy(), threshold if threshold is not None else self.cfg.threshold
        )

    @torch.no_grad()
    def point_features(self, points: np.ndarray) -> PointFeatures:
        """Coarsest-level point features with their provenance, for inspection."""
        self.eval()
        pyramid = self.make_pyramid(points)
        f_h, _ = self.point_encoder(pyramid)
        top = pyramid.levels[-1]
        return PointFeatures(
            data=f_h.numpy(),
            coords=top.coords.numpy(),
            sampling_index=top.index_in_original.numpy(),
        )
