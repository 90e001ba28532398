"""Turn sweep results into ranked feature sets: per-run elbow thresholding,
cross-run frequency ranking, a second elbow for the final cut, overlap
grouping against single-domain sweeps, and latent-space PCA exports.

"Selected in a run" means the run's normalized |weight| clears a single global
threshold computed from all weights of all runs pooled together (exact zeros
are rare under l1 with a zero subgradient at 0, so thresholding stands in for
"non-zero").
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.decomposition import PCA

from .data import PairedDomainData
from .network import embed, load_checkpoint
from .sweep import SweepResult

__all__ = [
    "FeatureReport",
    "OverlapReport",
    "LatentProjection",
    "elbow_threshold",
    "pooled_weight_threshold",
    "per_run_selection",
    "frequency_rank",
    "build_feature_report",
    "overlap_groups",
    "latent_pca",
]


@dataclass(frozen=True)
class FeatureReport:
    """Ranked features with cross-run frequencies and both elbow thresholds."""

    ranked_features: tuple[tuple[str, float, float], ...]  # (id, frequency, mean |w|)
    weight_threshold: float
    frequency_threshold: float
    selected: frozenset[str]

    def frequencies(self) -> dict[str, float]:
        return {f: freq for f, freq, _ in self.ranked_features}


@dataclass(frozen=True)
class OverlapReport:
    """Partition of one perspective's selected features by cross-report overlap."""

    perspective: str
    groups: dict[str, frozenset[str]]

    def all_features(self) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for members in self.groups.values():
            out = out | members
        return out


def elbow_threshold(values) -> float:
    """Knee of the descending-sorted curve: the value at the point of maximum
    perpendicular distance to the chord joining the first and last points.

    Ties break toward the larger index (more aggressive pruning). If every
    value is equal the chord is degenerate and that value is returned.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise ValueError("elbow needs at least 2 values")
    v = np.sort(v)[::-1]
    first, last = v[0], v[-1]
    if first == last:
        return float(first)
    x = np.arange(v.size, dtype=float)
    dx = float(v.size - 1)
    dy = last - first
    dist = np.abs(dy * x - dx * (v - first)) / math.hypot(dx, dy)
    knee = v.size - 1 - int(np.argmax(dist[::-1]))
    return float(v[knee])


def _pooled_normalized(sweep: SweepResult) -> tuple[dict[tuple[int, int], np.ndarray], float]:
    if not sweep.run_records:
        raise ValueError("sweep has no successful runs")
    abs_masks = {k: np.abs(r.final_mask) for k, r in sweep.run_records.items()}
    peak = max(float(m.max()) for m in abs_masks.values())
    return abs_masks, peak


def pooled_weight_threshold(sweep: SweepResult) -> float:
    """Global elbow threshold over all |weights| of all runs, max-normalized."""
    abs_masks, peak = _pooled_normalized(sweep)
    if peak == 0.0:
        return 0.0
    pooled = np.concatenate([m.ravel() for m in abs_masks.values()]) / peak
    return elbow_threshold(pooled)


def per_run_selection(sweep: SweepResult) -> dict[tuple[int, int], frozenset[str]]:
    """Feature ids whose normalized |weight| clears the global threshold, per run.

    Invariant under joint positive rescaling of all masks (max normalization).
    """
    abs_masks, peak = _pooled_normalized(sweep)
    if peak == 0.0:
        warnings.warn("all mask weights are zero across the sweep; selections are empty")
        return {k: frozenset() for k in abs_masks}
    threshold = pooled_weight_threshold(sweep)
    features = np.asarray(sweep.feature_ids)
    return {
        k: frozenset(features[m / peak >= threshold])
        for k, m in abs_masks.items()
    }


def frequency_rank(
    selections: dict[tuple[int, int], frozenset[str]],
    feature_ids: tuple[str, ...],
    masks: dict[tuple[int, int], np.ndarray] | None = None,
    weight_threshold: float = float("nan"),
) -> FeatureReport:
    """Rank features by how often runs select them; a second elbow cuts the final set.

    Frequency = (#runs selecting the feature) / (#runs). The elbow runs over
    the positive frequencies only; features at or above its value are selected.
    Ranking ties break by mean |weight| (over all runs), then by feature id.
    """
    if not selections:
        raise ValueError("no selections given")
    n_runs = len(selections)
    counts = {f: 0 for f in feature_ids}
    for sel in selections.values():
        for f in sel:
            counts[f] += 1
    freqs = {f: counts[f] / n_runs for f in feature_ids}
    positive = [v for v in freqs.values() if v > 0]
    if not positive:
        raise ValueError("no feature was ever selected")
    if len(positive) == 1:
        frequency_threshold = positive[0]
    else:
        frequency_threshold = elbow_threshold(positive)
    selected = frozenset(f for f, v in freqs.items() if v > 0 and v >= frequency_threshold)

    if masks:
        stacked = np.abs(np.stack([masks[k] for k in sorted(masks)]))
        mean_abs = dict(zip(feature_ids, stacked.mean(axis=0)))
    else:
        mean_abs = {f: 0.0 for f in feature_ids}
    ranked = tuple(
        (f, freqs[f], float(mean_abs[f]))
        for f in sorted(feature_ids, key=lambda f: (-freqs[f], -mean_abs[f], f))
    )
    return FeatureReport(ranked, weight_threshold, frequency_threshold, selected)


def build_feature_report(sweep: SweepResult) -> FeatureReport:
    """Full post-processing pipeline for one sweep."""
    selections = per_run_selection(sweep)
    return frequency_rank(selections, sweep.feature_ids, sweep.masks,
                          weight_threshold=pooled_weight_threshold(sweep))


def overlap_groups(
    across: FeatureReport,
    domain_a_only: FeatureReport,
    domain_b_only: FeatureReport,
) -> dict[str, OverlapReport]:
    """Partition each report's selected set by overlap with the other experiments.

    Across perspective: Both / DomainA / DomainB / None. Each single-domain
    perspective: Both (also found across domains) / DomainOnly.
    """
    universes = [frozenset(f for f, _, _ in r.ranked_features)
                 for r in (across, domain_a_only, domain_b_only)]
    if universes[0] != universes[1] or universes[0] != universes[2]:
        raise ValueError("feature universes differ across reports")
    acr, a, b = across.selected, domain_a_only.selected, domain_b_only.selected
    reports = {
        "across": OverlapReport("across", {
            "Both": frozenset(acr & a & b),
            "DomainA": frozenset((acr & a) - b),
            "DomainB": frozenset((acr & b) - a),
            "None": frozenset(acr - a - b),
        }),
        "single_a": OverlapReport("single_a", {
            "Both": frozenset(a & acr),
            "DomainOnly": frozenset(a - acr),
        }),
        "single_b": OverlapReport("single_b", {
            "Both": frozenset(b & acr),
            "DomainOnly": frozenset(b - acr),
        }),
    }
    return reports


@dataclass(frozen=True)
class LatentProjection:
    """Two-dimensional PCA of both domains' latent means, with sample tags."""

    coords: np.ndarray  # (n_a + n_b, 2)
    domains: tuple[str, ...]
    labels: tuple[str, ...]
    explained_variance: tuple[float, float]
    degenerate: bool


def latent_pca(checkpoint_path, data: PairedDomainData) -> LatentProjection:
    """Project all samples' latent means onto the top-2 principal components.

    Embeddings come from one trained run's checkpoint in inference mode
    (z = mu). A zero-variance embedding cloud yields all-zero coordinates with
    the degenerate flag set.
    """
    model, _ = load_checkpoint(checkpoint_path)
    if model.n_domains != 2:
        raise ValueError("latent PCA needs a two-domain checkpoint")
    if model.n_features != data.n_features:
        raise ValueError("checkpoint feature count does not match data")
    mu_a = embed(model, model.vae_a, data.domain_a.samples)
    mu_b = embed(model, model.vae_b, data.domain_b.samples)
    combined = np.vstack([mu_a, mu_b])
    names = data.domain_a.class_names
    domains = tuple([data.domain_a.domain_id] * len(mu_a) + [data.domain_b.domain_id] * len(mu_b))
    labels = tuple(names[l] for l in np.concatenate([data.domain_a.labels, data.domain_b.labels]))

    if combined.var(axis=0).sum() < 1e-12:
        return LatentProjection(np.zeros((len(combined), 2)), domains, labels, (0.0, 0.0), True)
    k = min(2, combined.shape[1], combined.shape[0])
    pca = PCA(n_components=k)
    coords = pca.fit_transform(combined)
    var = list(pca.explained_variance_) + [0.0] * (2 - k)
    if k < 2:
        coords = np.hstack([coords, np.zeros((len(coords), 2 - k))])
    return LatentProjection(coords, domains, labels, (float(var[0]), float(var[1])), False)
