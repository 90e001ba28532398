"""Shared test utilities: independent oracles and small data builders.

The oracles here deliberately avoid the library's code paths: the forward pass
is re-implemented in numpy from the checkpoint arrays, gradients come from
central finite differences, and the elbow uses a scalar projection formula.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from crossmask.data import (
    ExpressionDataset,
    PairedDomainData,
    SyntheticSpec,
    generate_synthetic,
    zscore_per_domain,
)


def finite_difference_gradients(model, loss_fn, step=1e-5):
    """Central finite differences of ``loss_fn()`` w.r.t. every named parameter.

    ``loss_fn`` must read the model's current parameter values and return a
    python float; any frozen snapshot, noise, and batch must be captured in the
    closure so only the live parameters vary.
    """
    grads = {}
    with torch.no_grad():
        for name, p in model.named_parameters():
            g = torch.zeros_like(p)
            flat = p.view(-1)
            gflat = g.view(-1)
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + step
                up = loss_fn()
                flat[k] = orig - step
                down = loss_fn()
                flat[k] = orig
                gflat[k] = (up - down) / (2.0 * step)
            grads[name] = g
    return grads


def max_relative_error(analytic: dict, numeric: dict, floor=1e-4) -> float:
    """Worst per-component relative error with an absolute floor.

    Components smaller than ``floor`` in both gradients are compared at the
    floor's scale, where central differences in double precision are still
    orders of magnitude tighter than the tolerance.
    """
    worst = 0.0
    for name, a in analytic.items():
        f = numeric[name]
        denom = torch.maximum(torch.maximum(a.abs(), f.abs()), torch.full_like(a, floor))
        worst = max(worst, float(((a - f).abs() / denom).max()))
    return worst


def numpy_composite_total(state, x_a, y_a, x_b, y_b, eps_a, eps_b, weights, training=True):
    """Second, torch-free implementation of the full forward pass and total loss."""

    w = state["mask.weight"]

    def affine(pfx, h):
        return h @ state[f"{pfx}.weight"].T + state[f"{pfx}.bias"]

    def bn(pfx, h):
        if training:
            m = h.mean(axis=0)
            v = h.var(axis=0)  # biased, matching batch-norm's normalization statistic
        else:
            m = state[f"{pfx}.running_mean"]
            v = state[f"{pfx}.running_var"]
        return state[f"{pfx}.weight"] * (h - m) / np.sqrt(v + 1e-5) + state[f"{pfx}.bias"]

    def relu(h):
        return np.maximum(h, 0.0)

    def encode(pfx, xm):
        h = relu(bn(f"{pfx}.bn1", affine(f"{pfx}.fc1", xm)))
        h = relu(bn(f"{pfx}.bn2", affine(f"{pfx}.fc2", h)))
        return affine(f"{pfx}.mu_head", h), affine(f"{pfx}.logvar_head", h)

    def decode(pfx, z):
        h = relu(bn(f"{pfx}.bn1", affine(f"{pfx}.fc1", z)))
        h = relu(bn(f"{pfx}.bn2", affine(f"{pfx}.fc2", h)))
        return affine(f"{pfx}.out", h)

    def classify(z):
        h = z
        for k in range(5):
            h = relu(affine(f"classifier.hidden_layers.{k}", h))
        h = affine("classifier.to_score", affine("classifier.to_pair", h))
        return 1.0 / (1.0 + np.exp(-h[:, 0]))

    def domain(pfx, x, y, eps):
        xm = x * w
        mu, logvar = encode(f"{pfx}.encoder", xm)
        z = mu + eps * np.exp(0.5 * logvar)
        recon = decode(f"{pfx}.decoder", z) * w
        rec = np.mean((xm - recon) ** 2)
        var = np.mean(0.5 * np.sum(np.exp(logvar) + mu**2 - 1.0 - logvar, axis=1))
        p = np.clip(classify(z), 1e-7, 1.0 - 1e-7)
        cls = -np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p))
        return rec, var, cls

    rec_a, var_a, cls_a = domain("vae_a", x_a, y_a, eps_a)
    rec_b, var_b, cls_b = domain("vae_b", x_b, y_b, eps_b)
    sparse = np.abs(w).sum()
    return (
        weights.reconstruction * (rec_a + rec_b)
        + weights.kl * (var_a + var_b)
        + weights.classification * (cls_a + cls_b)
        + weights.sparsity * sparse
    )


def elbow_oracle(values) -> float:
    """Exhaustive knee search: per-point distance to the chord via projection."""
    v = sorted((float(x) for x in values), reverse=True)
    n = len(v)
    if n < 2:
        raise ValueError("need at least 2 values")
    if v[0] == v[-1]:
        return v[0]
    ux, uy = float(n - 1), v[-1] - v[0]
    uu = ux * ux + uy * uy
    best_i, best_d = 0, -1.0
    for i, val in enumerate(v):
        t = (i * ux + (val - v[0]) * uy) / uu
        cx, cy = t * ux, v[0] + t * uy
        d = math.hypot(i - cx, val - cy)
        if d >= best_d:  # ties break toward the larger index
            best_d, best_i = d, i
    return v[best_i]


def monte_carlo_kl(mu: float, logvar: float, n_draws: int, rng: np.random.Generator) -> float:
    """KL(N(mu, sigma^2) || N(0, 1)) estimated from samples of the first Gaussian."""
    sigma = math.exp(0.5 * logvar)
    x = mu + sigma * rng.standard_normal(n_draws)
    log_q = -0.5 * ((x - mu) / sigma) ** 2 - math.log(sigma) - 0.5 * math.log(2 * math.pi)
    log_p = -0.5 * x**2 - 0.5 * math.log(2 * math.pi)
    return float(np.mean(log_q - log_p))


def make_pair(d=8, n=24, planted=(0, 1), effect=5.0, seed=0, standardize=True) -> PairedDomainData:
    spec = SyntheticSpec(d=d, n_a=n, n_b=n, planted_shared=tuple(planted),
                         effect_size_shared=effect, noise_seed=seed)
    data = generate_synthetic(spec)
    return zscore_per_domain(data) if standardize else data


def make_dataset(d=8, n=24, seed=0) -> ExpressionDataset:
    return make_pair(d=d, n=n, seed=seed).domain_a
