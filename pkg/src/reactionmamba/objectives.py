"""Training objectives: reconstruction MSE, KL divergence to the standard
normal prior, the contact-weighted reaction consistency loss, and their
weighted total."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import ConfigError, ShapeError
from .model import PosteriorStats
from .numerics import Tensor


@dataclass
class LossWeights:
    w_recon: float = 1.0
    w_kl: float = 0.5
    w_react: float = 1.0

    def __post_init__(self):
        for name in ("w_recon", "w_kl", "w_react"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        return {"w_recon": self.w_recon, "w_kl": self.w_kl, "w_react": self.w_react}


@dataclass
class LossReport:
    recon: float
    kl: float
    react: float
    total: float

    def to_dict(self) -> dict:
        return {"recon": self.recon, "kl": self.kl, "react": self.react, "total": self.total}


def _frames(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if hasattr(x, "frames"):
        return Tensor(x.frames)
    return Tensor(np.asarray(x))


def recon_loss(pred, target) -> Tensor:
    """Mean squared difference over every frame coordinate."""
    pred, target = _frames(pred), _frames(target)
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"shape mismatch {pred.data.shape} vs {target.data.shape}")
    diff = nm.add(pred, nm.mul(target, -1.0))
    return nm.mean(nm.mul(diff, diff))


def kl_loss(stats: PosteriorStats) -> Tensor:
    """Mean over elements of the closed-form KL(N(mu, sigma^2) || N(0, 1)):
    (mu^2 + exp(logvar) - 1 - logvar) / 2 per element."""
    mu, logvar = stats.mu, stats.logvar
    term = nm.add(nm.add(nm.mul(mu, mu), nm.exp(logvar)), nm.add(nm.mul(logvar, -1.0), -1.0))
    return nm.mul(nm.mean(term), 0.5)


def _per_frame_norm(diff: Tensor) -> Tensor:
    """Euclidean norm of each frame's full pose vector; (*, T, d) -> (*, T)."""
    return nm.sqrt(nm.sum_(nm.mul(diff, diff), axis=-1))


def reaction_loss(pred_reaction, gt_reaction, actor) -> Tensor:
    """Contact-weighted consistency with the actor's motion.

    Per frame, with a = actor, r = ground-truth reaction, rhat = prediction:
        exp(-||a - r||) * (||a - rhat|| - ||a - r||)^2
    averaged over frames. Frames where actor and reactor are close (likely
    contact) dominate; distant frames contribute almost nothing.
    """
    pred, gt, act = _frames(pred_reaction), _frames(gt_reaction), _frames(actor)
    if not (pred.data.shape == gt.data.shape == act.data.shape):
        raise ShapeError(
            f"shape mismatch: pred {pred.data.shape}, gt {gt.data.shape}, actor {act.data.shape}"
        )
    d_gt = _per_frame_norm(nm.add(act, nm.mul(gt, -1.0)))
    d_pred = _per_frame_norm(nm.add(act, nm.mul(pred, -1.0)))
    weight = nm.exp(nm.mul(d_gt, -1.0))
    gap = nm.add(d_pred, nm.mul(d_gt, -1.0))
    return nm.mean(nm.mul(weight, nm.mul(gap, gap)))


def total_loss(recon: Tensor, kl: Tensor, react: Tensor,
               weights: LossWeights) -> tuple[Tensor, LossReport]:
    """Weighted sum for backprop plus a float report.

    The report's total is composed from the reported component floats, so
    total == w_recon*recon + w_kl*kl + w_react*react holds exactly.
    """
    tensor = nm.add(
        nm.add(nm.mul(recon, weights.w_recon), nm.mul(kl, weights.w_kl)),
        nm.mul(react, weights.w_react),
    )
    r, k, c = recon.item(), kl.item(), react.item()
    report = LossReport(
        recon=r, kl=k, react=c,
        total=weights.w_recon * r + weights.w_kl * k + weights.w_react * c,
    )
    return tensor, report
