"""Single-run training: iterate batches, backpropagate the composite objective,
step four decoupled-weight-decay Adam optimizers (mask, each VAE, classifier).

An "epoch" here is one paired-batch iteration, NOT one pass over the data:
training runs for exactly ``epochs`` sampled batches. The mask's optimizer has
weight decay disabled; the l1 term is its only shrinkage force.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import ExpressionDataset, PairedDomainData, sample_batch, sample_batch_pair
from .network import MaskedDualVAE, embed, init_model
from .objective import LossBreakdown, LossWeights, composite_loss
from .seeding import BATCH_STREAM, NOISE_STREAM, mix_seeds

__all__ = ["TrainConfig", "RunRecord", "NonFiniteLossError", "train_one", "evaluate"]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20000
    batch_size: int = 32
    loss_weights: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = 1e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    hidden_dim: int = 1024
    latent_dim: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (batch norm)")
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["loss_weights"] = self.loss_weights.to_dict()
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "loss_weights" in kwargs:
            kwargs["loss_weights"] = LossWeights.from_dict(kwargs["loss_weights"])
        if "adam_betas" in kwargs:
            kwargs["adam_betas"] = tuple(kwargs["adam_betas"])
        return cls(**kwargs)


class NonFiniteLossError(RuntimeError):
    """Raised when the composite loss stops being finite; aborts the run."""

    def __init__(self, epoch: int, detail: str):
        super().__init__(f"non-finite loss at epoch {epoch}: {detail}")
        self.epoch = epoch


@dataclass
class RunRecord:
    """Persisted outcome of one training run."""

    run_id: str
    seed: int
    subsample_indices: dict[str, np.ndarray] | None
    final_mask: np.ndarray
    loss_history: list[LossBreakdown]
    config: TrainConfig
    embeddings: dict[str, np.ndarray] | None = None
    wall_seconds: list[float] | None = None
    run_dir: Path | None = None
    model: MaskedDualVAE | None = field(default=None, repr=False, compare=False)


def _make_optimizers(model: MaskedDualVAE, config: TrainConfig) -> list[torch.optim.AdamW]:
    kwargs = dict(lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps)
    opts = [torch.optim.AdamW([model.mask.weight], weight_decay=0.0, **kwargs)]
    subnets = [model.vae_a, model.classifier]
    if model.vae_b is not None:
        subnets.insert(1, model.vae_b)
    for net in subnets:
        opts.append(torch.optim.AdamW(net.parameters(), weight_decay=config.weight_decay, **kwargs))
    return opts


def train_one(
    data: PairedDomainData | ExpressionDataset,
    config: TrainConfig,
    run_id: str = "run",
    subsample_indices: dict[str, np.ndarray] | None = None,
) -> RunRecord:
    """Run the training loop on aligned, preprocessed data.

    Deterministic given (data, config): runs single-threaded with all random
    draws derived from ``config.seed``. Raises NonFiniteLossError if the loss
    diverges; the harness records such runs as failures.
    """
    torch.set_num_threads(1)
    dual = isinstance(data, PairedDomainData)
    d = data.n_features
    model = init_model(d, config.seed, config.hidden_dim, config.latent_dim,
                       n_domains=2 if dual else 1)
    model.train()
    noise_gen = torch.Generator().manual_seed(mix_seeds(config.seed, NOISE_STREAM))
    batch_rng = np.random.default_rng(mix_seeds(config.seed, BATCH_STREAM))
    optimizers = _make_optimizers(model, config)

    history: list[LossBreakdown] = []
    wall: list[float] = []
    start = time.perf_counter()
    for epoch in range(config.epochs):
        if dual:
            batch = sample_batch_pair(data, config.batch_size, batch_rng)
        else:
            batch = sample_batch(data, config.batch_size, batch_rng)
        eps_a = torch.randn(config.batch_size, config.latent_dim,
                            generator=noise_gen, dtype=model.dtype)
        eps_b = None
        if dual:
            eps_b = torch.randn(config.batch_size, config.latent_dim,
                                generator=noise_gen, dtype=model.dtype)
        try:
            breakdown, total = composite_loss(model, batch, config.loss_weights, eps_a, eps_b)
        except ValueError as exc:
            if "non-finite" in str(exc):
                raise NonFiniteLossError(epoch, str(exc)) from exc
            raise
        if not math.isfinite(breakdown.total):
            raise NonFiniteLossError(epoch, f"total={breakdown.total}")
        for opt in optimizers:
            opt.zero_grad(set_to_none=True)
        total.backward()
        for opt in optimizers:
            opt.step()
        history.append(breakdown)
        wall.append(time.perf_counter() - start)

    model.eval()
    if dual:
        embeddings = {
            "a": embed(model, model.vae_a, data.domain_a.samples),
            "b": embed(model, model.vae_b, data.domain_b.samples),
        }
    else:
        embeddings = {"a": embed(model, model.vae_a, data.samples)}
    return RunRecord(
        run_id=run_id,
        seed=config.seed,
        subsample_indices=subsample_indices,
        final_mask=model.mask.weight.detach().numpy().copy(),
        loss_history=history,
        config=config,
        embeddings=embeddings,
        wall_seconds=wall,
        model=model,
    )


def _domain_accuracy(model: MaskedDualVAE, vae, ds: ExpressionDataset) -> float:
    x = torch.as_tensor(ds.samples, dtype=model.dtype)
    with torch.no_grad():
        mu, _ = vae.encoder(model.mask(x))
        probs = model.classifier(mu)
    # eps = 0 at evaluation, so z = mu; ties at 0.5 predict class 1
    pred = (probs >= 0.5).long().numpy()
    return float((pred == ds.labels).mean())


def evaluate(model: MaskedDualVAE, data: PairedDomainData | ExpressionDataset):
    """Inference-mode accuracy; (acc_a, acc_b) for paired data, a float otherwise."""
    was_training = model.training
    model.eval()
    try:
        if isinstance(data, PairedDomainData):
            return (
                _domain_accuracy(model, model.vae_a, data.domain_a),
                _domain_accuracy(model, model.vae_b, data.domain_b),
            )
        return _domain_accuracy(model, model.vae_a, data)
    finally:
        if was_training:
            model.train()
