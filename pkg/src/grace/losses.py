"""Training objectives: focal + dice contact loss, part cross-entropy, and
the weighted total.

Contact labels are extremely imbalanced (a few percent of vertices touch
anything), so the contact loss mixes a sample-weighted focal term with a
region-level dice term. All functions accept float32 or float64 tensors and
are differentiable w.r.t. probabilities/logits; gradient correctness is
pinned against finite differences in the test suite.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

PROB_CLAMP = 1e-7


def _safe_probs(probs: torch.Tensor) -> torch.Tensor:
    """Clamp to [PROB_CLAMP, 1 - PROB_CLAMP] with a straight-through gradient.

    A hard clamp zeroes the gradient of any vertex whose probability has
    saturated past the bound, permanently freezing confidently-wrong
    predictions; passing the gradient through keeps the usual logit-space
    restoring force while the loss value stays exactly the clamped formula.
    """
    return probs + (probs.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP) - probs).detach()


@dataclass(frozen=True)
class LossConfig:
    contact_weight: float = 1.0     # omega_1
    part_weight: float = 1.0        # omega_2
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    dice_epsilon: float = 1.0
    focal_dice_mix: float = 0.5     # lambda: 1 -> pure focal, 0 -> pure dice
    variant: str = "combined"       # "combined" | "bce"

    def __post_init__(self):
        if self.contact_weight < 0 or self.part_weight < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be nonnegative")
        if self.dice_epsilon <= 0:
            raise ValueError("dice_epsilon must be positive")
        if not 0.0 <= self.focal_dice_mix <= 1.0:
            raise ValueError("focal_dice_mix must lie in [0, 1]")
        if self.variant not in ("combined", "bce"):
            raise ValueError(f"unknown loss variant {self.variant!r}")


def _check_lengths(probs: torch.Tensor, target: torch.Tensor) -> None:
    if probs.shape != target.shape:
        raise ValueError(f"shape mismatch: probs {tuple(probs.shape)} vs target {tuple(target.shape)}")


def focal_loss(probs: torch.Tensor, target: torch.Tensor,
               alpha: float = 0.25, gamma: float = 2.0) -> torch.Tensor:
    """Mean over vertices of -alpha_t * (1 - p_t)^gamma * log(p_t)."""
    _check_lengths(probs, target)
    p = _safe_probs(probs)
    p_t = p * target + (1.0 - p) * (1.0 - target)
    alpha_t = alpha * target + (1.0 - alpha) * (1.0 - target)
    return (-alpha_t * (1.0 - p_t) ** gamma * torch.log(p_t)).mean()


def dice_loss(probs: torch.Tensor, target: torch.Tensor,
              epsilon: float = 1.0) -> torch.Tensor:
    """1 - (2 * sum(p*t) + eps) / (sum(p) + sum(t) + eps)."""
    _check_lengths(probs, target)
    p = _safe_probs(probs)
    inter = (p * target).sum()
    return 1.0 - (2.0 * inter + epsilon) / (p.sum() + target.sum() + epsilon)


def contact_loss(probs: torch.Tensor, target: torch.Tensor,
                 cfg: LossConfig = LossConfig()) -> torch.Tensor:
    """The contact objective: focal/dice mix, or plain BCE for the ablation."""
    if cfg.variant == "bce":
        return F.binary_cross_entropy(_safe_probs(probs), target)
    lam = cfg.focal_dice_mix
    return (lam * focal_loss(probs, target, cfg.focal_alpha, cfg.focal_gamma)
            + (1.0 - lam) * dice_loss(probs, target, cfg.dice_epsilon))


def contact_loss_with_logits(logits: torch.Tensor, target: torch.Tensor,
                             cfg: LossConfig = LossConfig()) -> torch.Tensor:
    """Numerically stable twin of contact_loss, fed raw head logits.

    Same value as contact_loss(sigmoid(logits), ...) up to float rounding,
    but log-probabilities come from logsigmoid, so the gradient keeps its
    logit-space restoring force (sigmoid(z) - t) even when a vertex has
    saturated. Training uses this; the probability-space surface stays for
    callers that already have probabilities.
    """
    _check_lengths(logits, target)
    log_p = F.logsigmoid(logits)
    log_1p = F.logsigmoid(-logits)
    if cfg.variant == "bce":
        return -(target * log_p + (1.0 - target) * log_1p).mean()
    p = torch.sigmoid(logits)
    p_t = p * target + (1.0 - p) * (1.0 - target)
    log_p_t = log_p * target + log_1p * (1.0 - target)
    alpha_t = cfg.focal_alpha * target + (1.0 - cfg.focal_alpha) * (1.0 - target)
    focal = (-alpha_t * (1.0 - p_t) ** cfg.focal_gamma * log_p_t).mean()
    inter = (p * target).sum()
    dice = 1.0 - (2.0 * inter + cfg.dice_epsilon) / (p.sum() + target.sum() + cfg.dice_epsilon)
    lam = cfg.focal_dice_mix
    return lam * focal + (1.0 - lam) * dice


def part_loss(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean pixel cross-entropy of (J + 1)-class logits [J+1, H, W] against
    an integer mask [H, W]."""
    if logits.shape[1:] != mask.shape:
        raise ValueError(f"shape mismatch: logits {tuple(logits.shape)} vs mask {tuple(mask.shape)}")
    n_classes = logits.shape[0]
    if int(mask.max()) >= n_classes:
        raise ValueError(f"mask value {int(mask.max())} outside [0, {n_classes - 1}]")
    return F.cross_entropy(logits.unsqueeze(0), mask.unsqueeze(0).long())


def total_loss(l_contact: torch.Tensor, l_part: torch.Tensor,
               cfg: LossConfig = LossConfig()) -> torch.Tensor:
    return cfg.contact_weight * l_contact + cfg.part_weight * l_part
