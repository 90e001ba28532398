"""Command-line driver: synthesize data, run sweeps, render reports.

Subcommands: ``synth``, ``sweep``, ``report``. Every config-file field can be
overridden by a flag; the resolved configuration is echoed into the output
directory as ``effective_config.json``. All numeric outputs are written as
delimited text before any image is rendered.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import (
    SyntheticSpec,
    align_domains,
    generate_synthetic,
    load_dataset,
    load_ground_truth,
    save_synthetic,
    zscore_per_domain,
)
from .postprocess import build_feature_report, latent_pca, overlap_groups
from .reports import (
    render_frequency,
    render_loss_curves,
    render_pca,
    selection_metrics,
    write_feature_report,
    write_frequency_table,
    write_loss_curves,
    write_overlap_reports,
    write_pca_table,
)
from .sweep import SweepConfig, load_sweep, resume_sweep, run_single_domain, run_sweep
from .training import TrainConfig

__all__ = ["main", "entrypoint"]

CONFIG_SECTIONS = ("synthetic", "train", "sweep", "io")

_SYNTH_DEFAULTS = {
    "d": 200,
    "n_a": 200,
    "n_b": 200,
    "planted_shared": tuple(range(10)),
    "planted_a_only": tuple(range(10, 15)),
    "planted_b_only": tuple(range(15, 20)),
    "effect_size_shared": 5.0,
    "effect_size_single": 5.0,
    "noise_seed": 0,
}

_IO_KEYS = ("data_a", "data_b", "label_column", "out", "truth")


def _load_config(path) -> dict:
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    unknown = set(cfg) - set(CONFIG_SECTIONS)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    io_unknown = set(cfg.get("io", {})) - set(_IO_KEYS)
    if io_unknown:
        raise ValueError(f"unknown io config keys: {sorted(io_unknown)}")
    return cfg


def _parse_indices(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(t) for t in text.split(","))


def _synthetic_spec(args, cfg) -> SyntheticSpec:
    section = {**_SYNTH_DEFAULTS, **cfg.get("synthetic", {})}
    for flag, key in (
        ("n_features", "d"),
        ("n_a", "n_a"),
        ("n_b", "n_b"),
        ("effect_shared", "effect_size_shared"),
        ("effect_single", "effect_size_single"),
        ("seed", "noise_seed"),
    ):
        value = getattr(args, flag)
        if value is not None:
            section[key] = value
    for flag, key in (
        ("planted_shared", "planted_shared"),
        ("planted_a_only", "planted_a_only"),
        ("planted_b_only", "planted_b_only"),
    ):
        value = getattr(args, flag)
        if value is not None:
            section[key] = _parse_indices(value)
    return SyntheticSpec.from_dict(section)


def _train_config(args, cfg) -> TrainConfig:
    section = dict(cfg.get("train", {}))
    weights = dict(section.get("loss_weights", {}))
    for flag, key in (
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("learning_rate", "learning_rate"),
        ("weight_decay", "weight_decay"),
        ("adam_eps", "adam_eps"),
        ("hidden_dim", "hidden_dim"),
        ("latent_dim", "latent_dim"),
    ):
        value = getattr(args, flag)
        if value is not None:
            section[key] = value
    if args.adam_beta1 is not None or args.adam_beta2 is not None:
        betas = tuple(section.get("adam_betas", (0.9, 0.999)))
        section["adam_betas"] = (
            args.adam_beta1 if args.adam_beta1 is not None else betas[0],
            args.adam_beta2 if args.adam_beta2 is not None else betas[1],
        )
    for flag, key in (
        ("rec_weight", "reconstruction"),
        ("kl_weight", "kl"),
        ("class_weight", "classification"),
        ("sparsity_weight", "sparsity"),
    ):
        value = getattr(args, flag)
        if value is not None:
            weights[key] = value
    if weights:
        section["loss_weights"] = weights
    return TrainConfig.from_dict(section)


def _sweep_config(args, cfg, train: TrainConfig) -> SweepConfig:
    section = dict(cfg.get("sweep", {}))
    if "train" in section:
        raise ValueError("put training settings in the top-level 'train' section")
    allowed = set(SweepConfig.__dataclass_fields__) - {"train"}
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
    for flag, key in (
        ("subsamples", "n_subsamples"),
        ("inits", "n_inits"),
        ("fraction", "subsample_fraction"),
        ("seed", "base_seed"),
        ("mode", "mode"),
        ("workers", "max_parallel_workers"),
    ):
        value = getattr(args, flag)
        if value is not None:
            section[key] = value
    return SweepConfig(train=train, **section)


def _io_value(args, cfg, key: str, required: bool = False):
    value = getattr(args, key, None)
    if value is None:
        value = cfg.get("io", {}).get(key)
    if required and value is None:
        raise ValueError(f"missing required setting: {key.replace('_', '-')}")
    return value


def _echo_config(out_dir: Path, sections: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.json").write_text(json.dumps(sections, indent=2) + "\n")


def cmd_synth(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    spec = _synthetic_spec(args, cfg)
    out = Path(_io_value(args, cfg, "out", required=True))
    data = generate_synthetic(spec)
    paths = save_synthetic(data, spec, out)
    _echo_config(out, {"synthetic": spec.to_dict(), "io": {"out": str(out)}})
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    train = _train_config(args, cfg)
    sweep_cfg = _sweep_config(args, cfg, train)
    out = Path(_io_value(args, cfg, "out", required=True))
    path_a = _io_value(args, cfg, "data_a", required=True)
    path_b = _io_value(args, cfg, "data_b", required=True)
    label_column = _io_value(args, cfg, "label_column", required=True)

    ds_a = load_dataset(path_a, Path(path_a).stem, label_column)
    ds_b = load_dataset(path_b, Path(path_b).stem, label_column)
    pair = zscore_per_domain(align_domains(ds_a, ds_b))

    if args.resume and (out / "config.json").is_file():
        stored = SweepConfig.from_dict(json.loads((out / "config.json").read_text()))
        data = {
            "across": pair,
            "single-a": pair.domain_a,
            "single-b": pair.domain_b,
        }[stored.mode]
        result = resume_sweep(out, data)
        sweep_cfg = stored
    elif sweep_cfg.mode == "across":
        result = run_sweep(pair, sweep_cfg, out)
    elif sweep_cfg.mode == "single-a":
        result = run_single_domain(pair.domain_a, sweep_cfg, out)
    else:
        result = run_single_domain(pair.domain_b, sweep_cfg, out)

    _echo_config(out, {
        "train": sweep_cfg.train.to_dict(),
        "sweep": {k: v for k, v in sweep_cfg.to_dict().items() if k != "train"},
        "io": {"data_a": str(path_a), "data_b": str(path_b),
               "label_column": label_column, "out": str(out)},
    })
    print(f"runs completed: {len(result.run_records)}  failures: {len(result.failures)}")
    for failure in result.failures:
        print(f"  failed {failure['i']}_{failure['j']}: {failure['error']}", file=sys.stderr)
    return 0 if not result.failures else 1


def cmd_report(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    sweep_dir = Path(args.sweep)
    out = Path(_io_value(args, cfg, "out", required=False) or sweep_dir / "report")
    sweep = load_sweep(sweep_dir)
    if not sweep.run_records:
        raise ValueError(f"no successful runs found in {sweep_dir}")

    report = build_feature_report(sweep)
    write_feature_report(report, out)
    write_frequency_table(report, out)
    write_loss_curves(sweep, out)
    render_loss_curves(out)
    render_frequency(out)
    print(f"selected features: {len(report.selected)} "
          f"(weight threshold {report.weight_threshold:.4f}, "
          f"frequency threshold {report.frequency_threshold:.4f})")

    if args.single_a and args.single_b:
        rep_a = build_feature_report(load_sweep(Path(args.single_a)))
        rep_b = build_feature_report(load_sweep(Path(args.single_b)))
        overlaps = overlap_groups(report, rep_a, rep_b)
        write_overlap_reports(overlaps, out)
        across_groups = overlaps["across"].groups
        print("overlap (across): " + ", ".join(
            f"{g}={len(across_groups[g])}" for g in ("Both", "DomainA", "DomainB", "None")))
    else:
        print("overlap report skipped (needs --single-a and --single-b)")

    path_a = _io_value(args, cfg, "data_a")
    path_b = _io_value(args, cfg, "data_b")
    label_column = _io_value(args, cfg, "label_column")
    if path_a and path_b and label_column:
        ds_a = load_dataset(path_a, Path(path_a).stem, label_column)
        ds_b = load_dataset(path_b, Path(path_b).stem, label_column)
        pair = zscore_per_domain(align_domains(ds_a, ds_b))
        if sweep.config.mode == "across":
            first = sweep.run_records[min(sweep.run_records)]
            projection = latent_pca(first.run_dir / "checkpoint.npz", pair)
            write_pca_table(projection, out)
            render_pca(out)
        else:
            print("latent PCA skipped (single-domain sweep)")
    else:
        print("latent PCA skipped (needs --data-a, --data-b, --label-column)")

    truth_path = _io_value(args, cfg, "truth")
    if truth_path is None and path_a:
        candidate = Path(path_a).parent / "ground_truth.json"
        truth_path = candidate if candidate.is_file() else None
    if truth_path:
        truth = load_ground_truth(truth_path)
        planted = (set(truth["planted_shared_features"])
                   | set(truth["planted_a_only_features"])
                   | set(truth["planted_b_only_features"]))
        metrics = selection_metrics(report.selected, planted)
        (out / "selection_metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
        print(f"recall {metrics['recall']:.3f} precision {metrics['precision']:.3f} "
              f"({metrics['n_hit']}/{metrics['n_truth']} planted features recovered)")

    _echo_config(out, {"io": {
        "sweep": str(sweep_dir),
        "single_a": str(args.single_a) if args.single_a else None,
        "single_b": str(args.single_b) if args.single_b else None,
        "data_a": str(path_a) if path_a else None,
        "data_b": str(path_b) if path_b else None,
        "label_column": label_column,
        "truth": str(truth_path) if truth_path else None,
        "out": str(out),
    }})
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (sections: synthetic, train, sweep, io)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="base seed (sweeps) / noise seed (synth)")
    common.add_argument("--workers", type=int, help="max parallel workers")
    common.add_argument("--mode", choices=["across", "single-a", "single-b"],
                        help="sweep mode (default across)")

    train_flags = argparse.ArgumentParser(add_help=False)
    train_flags.add_argument("--epochs", type=int)
    train_flags.add_argument("--batch-size", type=int, dest="batch_size")
    train_flags.add_argument("--learning-rate", type=float, dest="learning_rate")
    train_flags.add_argument("--weight-decay", type=float, dest="weight_decay")
    train_flags.add_argument("--adam-beta1", type=float, dest="adam_beta1")
    train_flags.add_argument("--adam-beta2", type=float, dest="adam_beta2")
    train_flags.add_argument("--adam-eps", type=float, dest="adam_eps")
    train_flags.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    train_flags.add_argument("--latent-dim", type=int, dest="latent_dim")
    train_flags.add_argument("--rec-weight", type=float, dest="rec_weight")
    train_flags.add_argument("--kl-weight", type=float, dest="kl_weight")
    train_flags.add_argument("--class-weight", type=float, dest="class_weight")
    train_flags.add_argument("--sparsity-weight", type=float, dest="sparsity_weight")

    parser = argparse.ArgumentParser(
        prog="crossmask",
        description="Cross-domain sparse feature selection with masked dual VAEs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", parents=[common],
                             help="generate two-domain synthetic data with planted features")
    p_synth.add_argument("--n-features", type=int, dest="n_features")
    p_synth.add_argument("--n-a", type=int, dest="n_a")
    p_synth.add_argument("--n-b", type=int, dest="n_b")
    p_synth.add_argument("--planted-shared", dest="planted_shared",
                         help="comma-separated feature indices")
    p_synth.add_argument("--planted-a-only", dest="planted_a_only")
    p_synth.add_argument("--planted-b-only", dest="planted_b_only")
    p_synth.add_argument("--effect-shared", type=float, dest="effect_shared")
    p_synth.add_argument("--effect-single", type=float, dest="effect_single")
    p_synth.set_defaults(func=cmd_synth)

    p_sweep = sub.add_parser("sweep", parents=[common, train_flags],
                             help="run a multi-run training sweep")
    p_sweep.add_argument("--data-a", dest="data_a")
    p_sweep.add_argument("--data-b", dest="data_b")
    p_sweep.add_argument("--label-column", dest="label_column")
    p_sweep.add_argument("--subsamples", type=int)
    p_sweep.add_argument("--inits", type=int)
    p_sweep.add_argument("--fraction", type=float)
    p_sweep.add_argument("--resume", action="store_true",
                         help="complete missing runs of an existing sweep directory")
    p_sweep.set_defaults(func=cmd_sweep)

    p_report = sub.add_parser("report", parents=[common],
                              help="post-process sweeps into reports and plots")
    p_report.add_argument("--sweep", required=True, help="across-domain sweep directory")
    p_report.add_argument("--single-a", dest="single_a", help="single-domain sweep directory")
    p_report.add_argument("--single-b", dest="single_b", help="single-domain sweep directory")
    p_report.add_argument("--data-a", dest="data_a")
    p_report.add_argument("--data-b", dest="data_b")
    p_report.add_argument("--label-column", dest="label_column")
    p_report.add_argument("--truth", help="ground-truth sidecar for recall/precision")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:  # console script
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
