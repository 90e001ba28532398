"""Network components: shared sparse feature mask, per-domain VAEs, shared classifier.

The mask is a one-to-one elementwise gate on input features. Each domain gets
its own VAE over the masked input; a single classifier reads both domains'
latent codes. Decoder outputs are re-masked with a gradient-detached copy of
the mask so reconstruction targets only surviving features.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

__all__ = [
    "SparseMask",
    "Encoder",
    "Decoder",
    "VAE",
    "LatentClassifier",
    "MaskedDualVAE",
    "DomainForward",
    "reparameterize",
    "masked_decode",
    "forward_domain",
    "embed",
    "init_model",
    "save_checkpoint",
    "load_checkpoint",
]


class SparseMask(nn.Module):
    """Trainable elementwise gate over input features, initialized fully open."""

    def __init__(self, n_features: int):
        super().__init__()
        if n_features < 1:
            raise ValueError("n_features must be at least 1")
        self.weight = nn.Parameter(torch.ones(n_features))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ValueError(f"expected {self.weight.shape[0]} features, got {x.shape[-1]}")
        return x * self.weight


class Encoder(nn.Module):
    """Two hidden batch-normalized ReLU layers, then affine heads for mu and logvar."""

    def __init__(self, n_features: int, hidden_dim: int, latent_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(n_features, hidden_dim)
        self.bn1 = nn.BatchNorm1d(hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, hidden_dim)
        self.bn2 = nn.BatchNorm1d(hidden_dim)
        self.mu_head = nn.Linear(hidden_dim, latent_dim)
        self.logvar_head = nn.Linear(hidden_dim, latent_dim)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if self.training and x.shape[0] < 2:
            raise ValueError("training-mode encoding needs a batch of at least 2 rows (batch norm)")
        h = torch.relu(self.bn1(self.fc1(x)))
        h = torch.relu(self.bn2(self.fc2(h)))
        return self.mu_head(h), self.logvar_head(h)


class Decoder(nn.Module):
    """Mirror of the encoder; the output layer is affine (targets are z-scored)."""

    def __init__(self, n_features: int, hidden_dim: int, latent_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(latent_dim, hidden_dim)
        self.bn1 = nn.BatchNorm1d(hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, hidden_dim)
        self.bn2 = nn.BatchNorm1d(hidden_dim)
        self.out = nn.Linear(hidden_dim, n_features)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if self.training and z.shape[0] < 2:
            raise ValueError("training-mode decoding needs a batch of at least 2 rows (batch norm)")
        h = torch.relu(self.bn1(self.fc1(z)))
        h = torch.relu(self.bn2(self.fc2(h)))
        return self.out(h)


class VAE(nn.Module):
    def __init__(self, n_features: int, hidden_dim: int, latent_dim: int):
        super().__init__()
        self.encoder = Encoder(n_features, hidden_dim, latent_dim)
        self.decoder = Decoder(n_features, hidden_dim, latent_dim)


class LatentClassifier(nn.Module):
    """Five ReLU layers over the latent code, then affine maps to 2 and 1 dims, sigmoid."""

    def __init__(self, latent_dim: int, hidden_dim: int):
        super().__init__()
        dims = [latent_dim] + [hidden_dim] * 5
        self.hidden_layers = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(5)
        )
        self.to_pair = nn.Linear(hidden_dim, 2)
        self.to_score = nn.Linear(2, 1)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h = z
        for layer in self.hidden_layers:
            h = torch.relu(layer(h))
        # no activation between the 2-dim and 1-dim maps
        return torch.sigmoid(self.to_score(self.to_pair(h))).squeeze(-1)


class MaskedDualVAE(nn.Module):
    """Full model: shared mask + classifier, one VAE per domain (1 or 2 domains).

    Training vs inference mode is the usual module flag (``train()`` /
    ``eval()``); it controls batch-norm statistics. Reparameterization noise is
    always passed in explicitly.
    """

    def __init__(self, n_features: int, hidden_dim: int = 1024, latent_dim: int = 128,
                 n_domains: int = 2):
        super().__init__()
        if n_domains not in (1, 2):
            raise ValueError("n_domains must be 1 or 2")
        self.n_features = n_features
        self.hidden_dim = hidden_dim
        self.latent_dim = latent_dim
        self._n_domains = n_domains
        self.mask = SparseMask(n_features)
        self.vae_a = VAE(n_features, hidden_dim, latent_dim)
        self.vae_b = VAE(n_features, hidden_dim, latent_dim) if n_domains == 2 else None
        self.classifier = LatentClassifier(latent_dim, hidden_dim)

    @property
    def n_domains(self) -> int:
        return self._n_domains

    @property
    def dtype(self) -> torch.dtype:
        return self.mask.weight.dtype


class DomainForward(NamedTuple):
    masked_input: torch.Tensor
    mu: torch.Tensor
    logvar: torch.Tensor
    z: torch.Tensor
    recon_masked: torch.Tensor
    probs: torch.Tensor


def reparameterize(mu: torch.Tensor, logvar: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    """z = mu + eps * sigma with sigma = exp(logvar / 2)."""
    if mu.shape != logvar.shape or mu.shape != eps.shape:
        raise ValueError(f"shape mismatch: mu {tuple(mu.shape)}, logvar {tuple(logvar.shape)}, "
                         f"eps {tuple(eps.shape)}")
    return mu + eps * torch.exp(0.5 * logvar)


def masked_decode(decoder: Decoder, z: torch.Tensor, frozen_weight: torch.Tensor) -> torch.Tensor:
    """Decode z and gate the output with a detached mask snapshot.

    ``frozen_weight`` must not carry gradients: no gradient may reach the mask
    through the decoder-output side.
    """
    if frozen_weight.requires_grad:
        raise ValueError("frozen mask must be detached from the graph")
    recon = decoder(z)
    if recon.shape[-1] != frozen_weight.shape[0]:
        raise ValueError("frozen mask length does not match decoder output")
    return recon * frozen_weight


def forward_domain(model: MaskedDualVAE, vae: VAE, x: torch.Tensor, eps: torch.Tensor,
                   frozen_weight: torch.Tensor) -> DomainForward:
    """One domain's pass: mask, encode, reparameterize, decode (re-masked), classify."""
    xm = model.mask(x)
    mu, logvar = vae.encoder(xm)
    z = reparameterize(mu, logvar, eps)
    recon_masked = masked_decode(vae.decoder, z, frozen_weight)
    probs = model.classifier(z)
    return DomainForward(xm, mu, logvar, z, recon_masked, probs)


def embed(model: MaskedDualVAE, vae: VAE, x: np.ndarray | torch.Tensor) -> np.ndarray:
    """Inference-mode latent means for a sample matrix."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            xt = torch.as_tensor(np.asarray(x), dtype=model.dtype)
            mu, _ = vae.encoder(model.mask(xt))
        return mu.numpy().copy()
    finally:
        if was_training:
            model.train()


def init_model(n_features: int, seed: int, hidden_dim: int = 1024, latent_dim: int = 128,
               n_domains: int = 2, dtype: torch.dtype = torch.float32) -> MaskedDualVAE:
    """Build a model with fan-in-scaled uniform affine init, deterministic per seed.

    Every affine layer draws weight and bias from U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    out of one seeded generator; the mask starts at all ones.
    """
    if n_features < 1:
        raise ValueError("n_features must be at least 1")
    model = MaskedDualVAE(n_features, hidden_dim, latent_dim, n_domains).to(dtype)
    g = torch.Generator().manual_seed(int(seed) & ((1 << 63) - 1))
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, nn.Linear):
                bound = 1.0 / math.sqrt(m.weight.shape[1])
                m.weight.uniform_(-bound, bound, generator=g)
                m.bias.uniform_(-bound, bound, generator=g)
    return model


_META_KEY = "__meta__"


def save_checkpoint(model: MaskedDualVAE, path, seed: int | None = None,
                    config: dict | None = None) -> Path:
    """Serialize a model as a flat container of named arrays plus provenance meta."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    meta = {
        "n_features": model.n_features,
        "hidden_dim": model.hidden_dim,
        "latent_dim": model.latent_dim,
        "n_domains": model.n_domains,
        "dtype": str(model.dtype).removeprefix("torch."),
        "seed": seed,
        "config": config,
    }
    with path.open("wb") as fh:
        np.savez(fh, **{_META_KEY: json.dumps(meta)}, **arrays)
    return path


def load_checkpoint(path) -> tuple[MaskedDualVAE, dict]:
    """Rebuild a model from a checkpoint file; returns (model, meta)."""
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z[_META_KEY].item()))
        arrays = {k: z[k] for k in z.files if k != _META_KEY}
    model = MaskedDualVAE(
        meta["n_features"], meta["hidden_dim"], meta["latent_dim"], meta["n_domains"]
    ).to(getattr(torch, meta["dtype"]))
    model.load_state_dict({k: torch.as_tensor(v) for k, v in arrays.items()})
    model.eval()
    return model, meta
