"""Two-domain labeled expression data: loading, alignment, preprocessing, batching,
and synthetic data with planted ground truth.

All containers are immutable after construction and safe to share across workers.
Every randomized operation takes an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "ExpressionDataset",
    "PairedDomainData",
    "Batch",
    "BatchPair",
    "SyntheticSpec",
    "load_dataset",
    "write_dataset",
    "align_domains",
    "zscore_per_domain",
    "sample_batch",
    "sample_batch_pair",
    "subsample",
    "subsample_dataset",
    "generate_synthetic",
    "save_synthetic",
    "load_ground_truth",
]


@dataclass(frozen=True)
class ExpressionDataset:
    """One domain's (n x d) sample matrix with binary labels and feature ids."""

    domain_id: str
    features: tuple[str, ...]
    samples: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, str]

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-D matrix")
        n, d = samples.shape
        if d < 1:
            raise ValueError("dataset needs at least one feature")
        if n < 2:
            raise ValueError("dataset needs at least two samples")
        if len(self.features) != d:
            raise ValueError(f"{len(self.features)} feature ids for {d} columns")
        if len(set(self.features)) != d:
            seen, dup = set(), None
            for f in self.features:
                if f in seen:
                    dup = f
                    break
                seen.add(f)
            raise ValueError(f"duplicate feature {dup!r}")
        if labels.shape != (n,):
            raise ValueError("labels must be one per sample")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if np.unique(labels).size < 2:
            raise ValueError("single-class dataset")
        if len(self.class_names) != 2:
            raise ValueError("class_names must be a pair")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class PairedDomainData:
    """Two domains column-aligned to one canonical shared feature order."""

    domain_a: ExpressionDataset
    domain_b: ExpressionDataset
    shared_features: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "shared_features", tuple(self.shared_features))
        if self.domain_a.features != self.shared_features:
            raise ValueError("domain_a columns are not aligned to shared_features")
        if self.domain_b.features != self.shared_features:
            raise ValueError("domain_b columns are not aligned to shared_features")
        if self.domain_a.class_names != self.domain_b.class_names:
            raise ValueError("class names differ across domains")

    @property
    def n_features(self) -> int:
        return len(self.shared_features)


@dataclass(frozen=True)
class Batch:
    """Single-domain minibatch."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[0] < 1:
            raise ValueError("batch must be a non-empty 2-D matrix")
        if self.y.shape != (self.x.shape[0],):
            raise ValueError("labels must be one per batch row")


@dataclass(frozen=True)
class BatchPair:
    """Equally sized minibatches drawn from both domains."""

    x_a: np.ndarray
    y_a: np.ndarray
    x_b: np.ndarray
    y_b: np.ndarray

    def __post_init__(self):
        for x, y in ((self.x_a, self.y_a), (self.x_b, self.y_b)):
            if x.ndim != 2 or y.shape != (x.shape[0],):
                raise ValueError("malformed batch")
        if self.x_a.shape[0] != self.x_b.shape[0]:
            raise ValueError("batches must have equal size")
        if self.x_a.shape[0] < 1:
            raise ValueError("batch size must be at least 1")
        if self.x_a.shape[1] != self.x_b.shape[1]:
            raise ValueError("batches must have equal feature count")

    @property
    def size(self) -> int:
        return self.x_a.shape[0]


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for two-domain synthetic data with planted discriminative features.

    Effect sizes are class-mean separations in units of the background noise
    standard deviation (1.0).
    """

    d: int
    n_a: int
    n_b: int
    planted_shared: tuple[int, ...] = ()
    planted_a_only: tuple[int, ...] = ()
    planted_b_only: tuple[int, ...] = ()
    effect_size_shared: float = 5.0
    effect_size_single: float = 5.0
    noise_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "planted_shared", tuple(int(i) for i in self.planted_shared))
        object.__setattr__(self, "planted_a_only", tuple(int(i) for i in self.planted_a_only))
        object.__setattr__(self, "planted_b_only", tuple(int(i) for i in self.planted_b_only))
        if self.d < 1 or self.n_a < 2 or self.n_b < 2:
            raise ValueError("need d >= 1 and at least two samples per domain")
        sets = {
            "planted_shared": set(self.planted_shared),
            "planted_a_only": set(self.planted_a_only),
            "planted_b_only": set(self.planted_b_only),
        }
        for name, idx in sets.items():
            bad = [i for i in idx if not 0 <= i < self.d]
            if bad:
                raise ValueError(f"{name} indices out of range [0, {self.d}): {sorted(bad)}")
        names = list(sets)
        for i, first in enumerate(names):
            for second in names[i + 1 :]:
                overlap = sets[first] & sets[second]
                if overlap:
                    raise ValueError(
                        f"overlapping planted sets: {first} and {second} share {sorted(overlap)}"
                    )

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "n_a": self.n_a,
            "n_b": self.n_b,
            "planted_shared": list(self.planted_shared),
            "planted_a_only": list(self.planted_a_only),
            "planted_b_only": list(self.planted_b_only),
            "effect_size_shared": self.effect_size_shared,
            "effect_size_single": self.effect_size_single,
            "noise_seed": self.noise_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown synthetic config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("planted_shared", "planted_a_only", "planted_b_only"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def load_dataset(path, domain_id: str, label_column: str) -> ExpressionDataset:
    """Read one domain from delimited text.

    Layout: first column is the sample id, one column (``label_column``) holds
    the class, every other column is a feature named by its identifier. The
    delimiter (comma or tab) is detected from the header line. The two class
    values map to {0, 1} in lexicographic order.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    lines = path.read_text().splitlines()
    if not lines:
        raise ValueError(f"empty data file: {path}")
    delimiter = "\t" if "\t" in lines[0] else ","
    rows = list(csv.reader(lines, delimiter=delimiter))
    header = rows[0]
    if len(header) < 3:
        raise ValueError("need a sample id column, a label column, and at least one feature")
    if label_column not in header[1:]:
        raise ValueError(f"label column {label_column!r} not found")
    label_idx = header.index(label_column, 1)
    feature_names = [c for k, c in enumerate(header) if k not in (0, label_idx)]
    seen: set[str] = set()
    for f in feature_names:
        if f in seen:
            raise ValueError(f"duplicate feature {f!r}")
        seen.add(f)

    values: list[list[float]] = []
    raw_labels: list[str] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"ragged row at line {lineno}: {len(row)} fields, expected {len(header)}")
        raw_labels.append(row[label_idx])
        vals = []
        for k, cell in enumerate(row):
            if k in (0, label_idx):
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise ValueError(f"non-numeric expression value {cell!r} at line {lineno}") from None
        values.append(vals)

    classes = sorted(set(raw_labels))
    if len(classes) == 1:
        raise ValueError(f"single-class dataset: only {classes[0]!r} present")
    if len(classes) > 2:
        raise ValueError(f"expected exactly two classes, found {len(classes)}: {classes}")
    labels = np.array([classes.index(v) for v in raw_labels], dtype=int)
    return ExpressionDataset(
        domain_id=domain_id,
        features=tuple(feature_names),
        samples=np.array(values, dtype=float),
        labels=labels,
        class_names=(classes[0], classes[1]),
    )


def write_dataset(ds: ExpressionDataset, path) -> Path:
    """Write a dataset in the loader's format (comma delimited, label column 'label')."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label", *ds.features])
        for i in range(ds.n_samples):
            writer.writerow(
                [f"{ds.domain_id}_{i:04d}", ds.class_names[ds.labels[i]]]
                + [repr(float(v)) for v in ds.samples[i]]
            )
    return path


def align_domains(a: ExpressionDataset, b: ExpressionDataset) -> PairedDomainData:
    """Restrict both domains to their shared features, in sorted canonical order."""
    shared = sorted(set(a.features) & set(b.features))
    if not shared:
        raise ValueError("domains share no features")
    if a.class_names != b.class_names:
        raise ValueError(f"class names differ across domains: {a.class_names} vs {b.class_names}")

    def restrict(ds: ExpressionDataset) -> ExpressionDataset:
        pos = {f: i for i, f in enumerate(ds.features)}
        idx = np.array([pos[f] for f in shared], dtype=int)
        return replace(ds, features=tuple(shared), samples=ds.samples[:, idx])

    return PairedDomainData(restrict(a), restrict(b), tuple(shared))


def _zscore(ds: ExpressionDataset) -> ExpressionDataset:
    mean = ds.samples.mean(axis=0)
    std = ds.samples.std(axis=0)  # population std
    safe = np.where(std > 0, std, 1.0)
    out = np.where(std > 0, (ds.samples - mean) / safe, 0.0)
    return replace(ds, samples=out)


def zscore_per_domain(p: PairedDomainData) -> PairedDomainData:
    """Standardize each feature to zero mean / unit variance within each domain.

    Constant columns map to all zeros.
    """
    return PairedDomainData(_zscore(p.domain_a), _zscore(p.domain_b), p.shared_features)


def sample_batch(ds: ExpressionDataset, batch_size: int, rng: np.random.Generator) -> Batch:
    """Draw a minibatch uniformly with replacement."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    idx = rng.integers(0, ds.n_samples, size=batch_size)
    return Batch(ds.samples[idx], ds.labels[idx])


def sample_batch_pair(p: PairedDomainData, batch_size: int, rng: np.random.Generator) -> BatchPair:
    """Draw equally sized minibatches independently from both domains."""
    a = sample_batch(p.domain_a, batch_size, rng)
    b = sample_batch(p.domain_b, batch_size, rng)
    return BatchPair(a.x, a.y, b.x, b.y)


def subsample_dataset(
    ds: ExpressionDataset, fraction: float, rng: np.random.Generator
) -> tuple[ExpressionDataset, np.ndarray]:
    """Retain ceil(fraction * count) samples per class, without replacement.

    Stratified so that neither class can vanish. Returns the retained row
    indices (sorted) for reproducibility.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    keep = []
    for cls in (0, 1):
        idx = np.flatnonzero(ds.labels == cls)
        k = math.ceil(fraction * idx.size)
        keep.append(rng.choice(idx, size=k, replace=False))
    retained = np.sort(np.concatenate(keep))
    return replace(ds, samples=ds.samples[retained], labels=ds.labels[retained]), retained


def subsample(
    p: PairedDomainData, fraction: float, rng: np.random.Generator
) -> tuple[PairedDomainData, dict[str, np.ndarray]]:
    """Stratified per-class subsample of both domains; keys 'a' and 'b' record indices."""
    sub_a, idx_a = subsample_dataset(p.domain_a, fraction, rng)
    sub_b, idx_b = subsample_dataset(p.domain_b, fraction, rng)
    return PairedDomainData(sub_a, sub_b, p.shared_features), {"a": idx_a, "b": idx_b}


def _balanced_labels(n: int) -> np.ndarray:
    n0 = math.ceil(n / 2)
    return np.concatenate([np.zeros(n0, dtype=int), np.ones(n - n0, dtype=int)])


def generate_synthetic(spec: SyntheticSpec) -> PairedDomainData:
    """Two domains of standard-normal noise with planted class-mean shifts.

    Class-1 rows of a planted column are shifted by the effect size, so the
    class means differ by exactly that many noise standard deviations. Output
    is NOT z-scored; the caller decides.
    """
    rng = np.random.default_rng(spec.noise_seed)
    features = tuple(f"g{j:04d}" for j in range(spec.d))
    y_a = _balanced_labels(spec.n_a)
    y_b = _balanced_labels(spec.n_b)
    x_a = rng.standard_normal((spec.n_a, spec.d))
    x_b = rng.standard_normal((spec.n_b, spec.d))
    for j in spec.planted_shared:
        x_a[y_a == 1, j] += spec.effect_size_shared
        x_b[y_b == 1, j] += spec.effect_size_shared
    for j in spec.planted_a_only:
        x_a[y_a == 1, j] += spec.effect_size_single
    for j in spec.planted_b_only:
        x_b[y_b == 1, j] += spec.effect_size_single
    names = ("neg", "pos")
    a = ExpressionDataset("domain_a", features, x_a, y_a, names)
    b = ExpressionDataset("domain_b", features, x_b, y_b, names)
    return PairedDomainData(a, b, features)


def save_synthetic(data: PairedDomainData, spec: SyntheticSpec, out_dir) -> dict[str, Path]:
    """Write both domain files plus the ground-truth sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path_a = write_dataset(data.domain_a, out / "domain_a.csv")
    path_b = write_dataset(data.domain_b, out / "domain_b.csv")
    features = data.shared_features
    sidecar = spec.to_dict()
    sidecar["planted_shared_features"] = [features[j] for j in spec.planted_shared]
    sidecar["planted_a_only_features"] = [features[j] for j in spec.planted_a_only]
    sidecar["planted_b_only_features"] = [features[j] for j in spec.planted_b_only]
    truth_path = out / "ground_truth.json"
    truth_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    return {"domain_a": path_a, "domain_b": path_b, "ground_truth": truth_path}


def load_ground_truth(path) -> dict:
    """Read a ground-truth sidecar; returns the spec fields plus planted feature ids."""
    with Path(path).open() as fh:
        truth = json.load(fh)
    for key in ("planted_shared_features", "planted_a_only_features", "planted_b_only_features"):
        truth.setdefault(key, [])
    return truth
