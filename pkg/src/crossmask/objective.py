"""Four-part training objective: reconstruction, KL, classification, sparsity.

Reduction conventions (fixed so loss weights keep their meaning across batch
sizes): reconstruction is the mean squared error over all batch-by-feature
entries; KL is summed over latent dimensions and averaged over the batch;
classification is mean binary cross-entropy; sparsity is the unnormalized l1
norm of the mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np
import torch

from .data import Batch, BatchPair
from .network import MaskedDualVAE, forward_domain

__all__ = [
    "LossWeights",
    "LossBreakdown",
    "reconstruction_loss",
    "kl_loss",
    "classification_loss",
    "sparsity_loss",
    "composite_loss",
    "gradients",
]

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Non-negative scalar weights for the four objective terms."""

    reconstruction: float = 10.0
    kl: float = 1e-4
    classification: float = 1.0
    sparsity: float = 1e-4

    def __post_init__(self):
        for name in ("reconstruction", "kl", "classification", "sparsity"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0")

    def to_dict(self) -> dict:
        return {
            "reconstruction": self.reconstruction,
            "kl": self.kl,
            "classification": self.classification,
            "sparsity": self.sparsity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown loss weight keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term and total loss for one paired batch.

    ``total`` is always the weighted recombination of the seven components, so
    the identity total == w_rec*(rec_a+rec_b) + w_kl*(var_a+var_b)
    + w_class*(class_a+class_b) + w_sparse*sparse holds by construction.
    """

    rec_a: float
    rec_b: float
    var_a: float
    var_b: float
    class_a: float
    class_b: float
    sparse: float
    total: float

    CSV_FIELDS: ClassVar[tuple[str, ...]] = (
        "rec_a", "rec_b", "var_a", "var_b", "class_a", "class_b", "sparse", "total",
    )

    @classmethod
    def combine(cls, weights: LossWeights, rec_a: float, rec_b: float, var_a: float,
                var_b: float, class_a: float, class_b: float, sparse: float) -> "LossBreakdown":
        total = (
            weights.reconstruction * (rec_a + rec_b)
            + weights.kl * (var_a + var_b)
            + weights.classification * (class_a + class_b)
            + weights.sparsity * sparse
        )
        return cls(rec_a, rec_b, var_a, var_b, class_a, class_b, sparse, total)

    def as_row(self) -> list[float]:
        return [getattr(self, f) for f in self.CSV_FIELDS]


def reconstruction_loss(x: torch.Tensor, mask_weight: torch.Tensor,
                        recon_masked: torch.Tensor) -> torch.Tensor:
    """MSE between the masked input and the already-masked reconstruction.

    The target side uses the live mask, so its gradient flows into the mask;
    ``recon_masked`` is expected to carry the detached mask from decoding.
    """
    if x.shape != recon_masked.shape:
        raise ValueError(f"shape mismatch: x {tuple(x.shape)} vs recon {tuple(recon_masked.shape)}")
    if x.shape[-1] != mask_weight.shape[0]:
        raise ValueError("mask length does not match inputs")
    return torch.mean((x * mask_weight - recon_masked) ** 2)


def kl_loss(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, sigma^2 I) || N(0, I)): sum over latent dims, mean over batch."""
    if mu.shape != logvar.shape:
        raise ValueError(f"shape mismatch: mu {tuple(mu.shape)} vs logvar {tuple(logvar.shape)}")
    if not (torch.isfinite(mu).all() and torch.isfinite(logvar).all()):
        raise ValueError("non-finite inputs to kl_loss")
    return torch.mean(0.5 * torch.sum(torch.exp(logvar) + mu**2 - 1.0 - logvar, dim=-1))


def classification_loss(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy; probabilities clamped to [1e-7, 1 - 1e-7]."""
    if probs.shape != labels.shape:
        raise ValueError(f"shape mismatch: probs {tuple(probs.shape)} vs labels {tuple(labels.shape)}")
    if ((probs < 0) | (probs > 1)).any():
        raise ValueError("probabilities must lie in [0, 1]")
    p = probs.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = labels.to(p.dtype)
    return -(y * torch.log(p) + (1.0 - y) * torch.log1p(-p)).mean()


def sparsity_loss(mask_weight: torch.Tensor) -> torch.Tensor:
    """l1 norm of the mask weights (unnormalized sum over features)."""
    return mask_weight.abs().sum()


def _as_model_tensor(x, model: MaskedDualVAE) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x), dtype=model.dtype)


def composite_loss(
    model: MaskedDualVAE,
    batch: BatchPair | Batch,
    weights: LossWeights,
    eps_a,
    eps_b=None,
    frozen_weight: torch.Tensor | None = None,
) -> tuple[LossBreakdown, torch.Tensor]:
    """Full forward pass for one batch; returns (breakdown, differentiable total).

    A ``BatchPair`` drives both VAEs; a single-domain ``Batch`` drives ``vae_a``
    only and the absent domain's terms are zero. ``frozen_weight`` defaults to a
    detached snapshot of the current mask; tests may pass an explicit snapshot.
    """
    if frozen_weight is None:
        frozen_weight = model.mask.weight.detach()
    dual = isinstance(batch, BatchPair)
    if dual and model.n_domains != 2:
        raise ValueError("paired batch requires a two-domain model")

    x_a = _as_model_tensor(batch.x_a if dual else batch.x, model)
    y_a = torch.as_tensor(np.asarray(batch.y_a if dual else batch.y))
    eps_a = _as_model_tensor(eps_a, model)
    fa = forward_domain(model, model.vae_a, x_a, eps_a, frozen_weight)
    rec_a = reconstruction_loss(x_a, model.mask.weight, fa.recon_masked)
    var_a = kl_loss(fa.mu, fa.logvar)
    class_a = classification_loss(fa.probs, y_a.to(fa.probs.dtype))

    if dual:
        if eps_b is None:
            raise ValueError("paired batch needs eps_b")
        x_b = _as_model_tensor(batch.x_b, model)
        y_b = torch.as_tensor(np.asarray(batch.y_b))
        eps_b = _as_model_tensor(eps_b, model)
        fb = forward_domain(model, model.vae_b, x_b, eps_b, frozen_weight)
        rec_b = reconstruction_loss(x_b, model.mask.weight, fb.recon_masked)
        var_b = kl_loss(fb.mu, fb.logvar)
        class_b = classification_loss(fb.probs, y_b.to(fb.probs.dtype))
    else:
        zero = torch.zeros((), dtype=model.dtype)
        rec_b = var_b = class_b = zero

    sparse = sparsity_loss(model.mask.weight)
    total = (
        weights.reconstruction * (rec_a + rec_b)
        + weights.kl * (var_a + var_b)
        + weights.classification * (class_a + class_b)
        + weights.sparsity * sparse
    )
    breakdown = LossBreakdown.combine(
        weights, rec_a.item(), rec_b.item(), var_a.item(), var_b.item(),
        class_a.item(), class_b.item(), sparse.item(),
    )
    return breakdown, total


def gradients(
    model: MaskedDualVAE,
    batch: BatchPair | Batch,
    weights: LossWeights,
    eps_a,
    eps_b=None,
    frozen_weight: torch.Tensor | None = None,
) -> dict[str, torch.Tensor]:
    """Exact gradients of the composite total for every named parameter.

    The l1 subgradient at exactly-zero mask weights is 0, so pruned weights
    feel no resurrection force.
    """
    model.zero_grad(set_to_none=True)
    _, total = composite_loss(model, batch, weights, eps_a, eps_b, frozen_weight)
    total.backward()
    out = {}
    for name, p in model.named_parameters():
        out[name] = torch.zeros_like(p) if p.grad is None else p.grad.detach().clone()
    model.zero_grad(set_to_none=True)
    return out
