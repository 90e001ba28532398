"""Multi-run experiment harness: S subsamplings x R weight initializations.

Runs are embarrassingly parallel and deterministic under parallelism: every
cell (i, j) derives its seeds purely from (base_seed, i, j), workers share
nothing but the read-only dataset, and each cell writes its own keyed
directory. A sweep executed with any worker count, or interrupted and
resumed, produces identical numeric results.

On-disk layout::

    <out>/config.json             sweep + train config snapshot
    <out>/features.txt            canonical feature order (one id per line)
    <out>/runs/<i>_<j>/mask.npy   final mask weights
    <out>/runs/<i>_<j>/log.csv    per-epoch loss breakdown + wall-clock seconds
    <out>/runs/<i>_<j>/checkpoint.npz
    <out>/runs/<i>_<j>/meta.json  seed, retained subsample indices, status
    <out>/failures.json           cells that aborted, with error messages
"""

from __future__ import annotations

import csv
import dataclasses
import json
import multiprocessing
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ExpressionDataset, PairedDomainData, subsample, subsample_dataset
from .network import save_checkpoint
from .objective import LossBreakdown
from .seeding import subsample_seed, train_seed
from .training import RunRecord, TrainConfig, train_one

__all__ = [
    "SweepConfig",
    "SweepResult",
    "WORKERS_ENV_VAR",
    "list_seeds",
    "run_sweep",
    "run_single_domain",
    "resume_sweep",
    "load_sweep",
]

WORKERS_ENV_VAR = "CROSSMASK_WORKERS"

MODES = ("across", "single-a", "single-b")


@dataclass(frozen=True)
class SweepConfig:
    n_subsamples: int = 10
    n_inits: int = 90
    subsample_fraction: float = 0.85
    base_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    mode: str = "across"
    max_parallel_workers: int = 1

    def __post_init__(self):
        if self.n_subsamples < 1 or self.n_inits < 1:
            raise ValueError("n_subsamples and n_inits must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def n_runs(self) -> int:
        return self.n_subsamples * self.n_inits

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "train" in kwargs:
            kwargs["train"] = TrainConfig.from_dict(kwargs["train"])
        return cls(**kwargs)


@dataclass
class SweepResult:
    sweep_id: str
    config: SweepConfig
    feature_ids: tuple[str, ...]
    run_records: dict[tuple[int, int], RunRecord]
    failures: list[dict]

    @property
    def masks(self) -> dict[tuple[int, int], np.ndarray]:
        return {k: r.final_mask for k, r in self.run_records.items()}


def list_seeds(config: SweepConfig) -> list[tuple[int, int, int, int]]:
    """(i, j, subsample seed, run seed) for every cell, without executing anything."""
    return [
        (i, j, subsample_seed(config.base_seed, i), train_seed(config.base_seed, i, j))
        for i in range(config.n_subsamples)
        for j in range(config.n_inits)
    ]


def _run_dir(out_dir: Path, i: int, j: int) -> Path:
    return Path(out_dir) / "runs" / f"{i}_{j}"


def _write_log(path: Path, history: list[LossBreakdown], wall: list[float]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", *LossBreakdown.CSV_FIELDS, "seconds"])
        for epoch, (row, sec) in enumerate(zip(history, wall)):
            writer.writerow([epoch] + [repr(v) for v in row.as_row()] + [f"{sec:.3f}"])


def _read_log(path: Path) -> list[LossBreakdown]:
    history = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[1:-1] != list(LossBreakdown.CSV_FIELDS):
            raise ValueError(f"unexpected log header in {path}")
        for row in reader:
            history.append(LossBreakdown(*(float(v) for v in row[1:-1])))
    return history


def _persist_run(run_dir: Path, record: RunRecord, i: int, j: int) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    np.save(run_dir / "mask.npy", record.final_mask)
    _write_log(run_dir / "log.csv", record.loss_history, record.wall_seconds)
    save_checkpoint(record.model, run_dir / "checkpoint.npz", seed=record.seed,
                    config=record.config.to_dict())
    meta = {
        "run_id": record.run_id,
        "i": i,
        "j": j,
        "seed": record.seed,
        "epochs": record.config.epochs,
        "n_features": int(record.final_mask.shape[0]),
        "subsample_indices": {k: v.tolist() for k, v in (record.subsample_indices or {}).items()},
        "status": "ok",
    }
    # meta.json is written last and acts as the completeness marker
    (run_dir / "meta.json").write_text(json.dumps(meta) + "\n")


def _load_run(run_dir: Path, config: SweepConfig) -> RunRecord:
    meta = json.loads((run_dir / "meta.json").read_text())
    mask = np.load(run_dir / "mask.npy")
    history = _read_log(run_dir / "log.csv")
    if len(history) != config.train.epochs:
        raise ValueError(f"{run_dir}: log has {len(history)} epochs, expected {config.train.epochs}")
    if mask.shape != (meta["n_features"],):
        raise ValueError(f"{run_dir}: mask shape {mask.shape} does not match meta")
    if not (run_dir / "checkpoint.npz").is_file():
        raise ValueError(f"{run_dir}: missing checkpoint")
    return RunRecord(
        run_id=meta["run_id"],
        seed=meta["seed"],
        subsample_indices={k: np.array(v, dtype=int) for k, v in meta["subsample_indices"].items()},
        final_mask=mask,
        loss_history=history,
        config=config.train,
        run_dir=run_dir,
    )


def _run_is_complete(run_dir: Path, config: SweepConfig) -> bool:
    try:
        _load_run(run_dir, config)
        return True
    except Exception:
        return False


def _execute_cell(data, config: SweepConfig, out_dir: Path, i: int, j: int) -> None:
    rng = np.random.default_rng(subsample_seed(config.base_seed, i))
    if isinstance(data, PairedDomainData):
        sub, indices = subsample(data, config.subsample_fraction, rng)
    else:
        sub, idx = subsample_dataset(data, config.subsample_fraction, rng)
        indices = {"a": idx}
    cfg = dataclasses.replace(config.train, seed=train_seed(config.base_seed, i, j))
    record = train_one(sub, cfg, run_id=f"{i}_{j}", subsample_indices=indices)
    _persist_run(_run_dir(out_dir, i, j), record, i, j)


_WORKER_STATE: dict = {}


def _worker_init(data, config: SweepConfig, out_dir: str) -> None:
    _WORKER_STATE["data"] = data
    _WORKER_STATE["config"] = config
    _WORKER_STATE["out_dir"] = Path(out_dir)


def _worker_cell(cell: tuple[int, int]) -> tuple[int, int, str]:
    i, j = cell
    try:
        _execute_cell(_WORKER_STATE["data"], _WORKER_STATE["config"],
                      _WORKER_STATE["out_dir"], i, j)
        return i, j, ""
    except Exception as exc:  # failures are recorded, never abort the sweep
        return i, j, f"{type(exc).__name__}: {exc}"


def _effective_workers(config: SweepConfig) -> int:
    env = os.environ.get(WORKERS_ENV_VAR)
    workers = int(env) if env else config.max_parallel_workers
    return max(1, workers)


def _run_generic(data, config: SweepConfig, out_dir, resume: bool) -> SweepResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs_dir = out_dir / "runs"
    if not resume and runs_dir.exists():
        shutil.rmtree(runs_dir)
    (out_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    if isinstance(data, PairedDomainData):
        features = data.shared_features
    else:
        features = data.features
    (out_dir / "features.txt").write_text("".join(f"{f}\n" for f in features))

    cells = [(i, j) for i in range(config.n_subsamples) for j in range(config.n_inits)]
    pending = [c for c in cells if not (resume and _run_is_complete(_run_dir(out_dir, *c), config))]

    failures: list[dict] = []
    workers = min(_effective_workers(config), max(len(pending), 1))
    if workers <= 1 or not pending:
        for i, j in pending:
            try:
                _execute_cell(data, config, out_dir, i, j)
            except Exception as exc:
                failures.append({"i": i, "j": j, "error": f"{type(exc).__name__}: {exc}"})
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx,
                                 initializer=_worker_init,
                                 initargs=(data, config, str(out_dir))) as pool:
            for i, j, error in pool.map(_worker_cell, pending):
                if error:
                    failures.append({"i": i, "j": j, "error": error})

    (out_dir / "failures.json").write_text(json.dumps(failures, indent=2) + "\n")
    run_records = {}
    for i, j in cells:
        rd = _run_dir(out_dir, i, j)
        if any(f["i"] == i and f["j"] == j for f in failures):
            continue
        run_records[(i, j)] = _load_run(rd, config)
    return SweepResult(
        sweep_id=out_dir.name,
        config=config,
        feature_ids=tuple(features),
        run_records=run_records,
        failures=failures,
    )


def run_sweep(data: PairedDomainData, config: SweepConfig, out_dir, resume: bool = False) -> SweepResult:
    """Across-domain sweep: n_subsamples x n_inits runs of the two-domain model."""
    if config.mode != "across":
        raise ValueError("run_sweep handles mode 'across'; use run_single_domain otherwise")
    if not isinstance(data, PairedDomainData):
        raise TypeError("across-domain sweep needs PairedDomainData")
    return _run_generic(data, config, out_dir, resume)


def run_single_domain(data: ExpressionDataset, config: SweepConfig, out_dir,
                      resume: bool = False) -> SweepResult:
    """Single-domain sweep: shared mask, one VAE, classifier; absent domain's terms drop."""
    if config.mode == "across":
        raise ValueError("run_single_domain needs mode 'single-a' or 'single-b'")
    if not isinstance(data, ExpressionDataset):
        raise TypeError("single-domain sweep needs an ExpressionDataset")
    return _run_generic(data, config, out_dir, resume)


def resume_sweep(out_dir, data) -> SweepResult:
    """Complete the missing cells of a persisted sweep; finished cells are untouched."""
    out_dir = Path(out_dir)
    config = SweepConfig.from_dict(json.loads((out_dir / "config.json").read_text()))
    if config.mode == "across":
        return run_sweep(data, config, out_dir, resume=True)
    return run_single_domain(data, config, out_dir, resume=True)


def load_sweep(out_dir) -> SweepResult:
    """Materialize a persisted sweep's records (without models) for analysis."""
    out_dir = Path(out_dir)
    config = SweepConfig.from_dict(json.loads((out_dir / "config.json").read_text()))
    features = tuple((out_dir / "features.txt").read_text().splitlines())
    failures_path = out_dir / "failures.json"
    failures = json.loads(failures_path.read_text()) if failures_path.is_file() else []
    run_records = {}
    for i in range(config.n_subsamples):
        for j in range(config.n_inits):
            rd = _run_dir(out_dir, i, j)
            if rd.is_dir() and _run_is_complete(rd, config):
                run_records[(i, j)] = _load_run(rd, config)
    return SweepResult(out_dir.name, config, features, run_records, failures)
