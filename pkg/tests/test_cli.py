import json
from pathlib import Path

import numpy as np
import pytest

from crossmask.cli import main
from crossmask.data import load_dataset
from crossmask.reports import selection_metrics


def run_cli(*argv):
    return main([str(a) for a in argv])


SWEEP_FLAGS = [
    "--subsamples", 1, "--inits", 2, "--epochs", 25, "--batch-size", 6,
    "--hidden-dim", 8, "--latent-dim", 4, "--learning-rate", 1e-3,
]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = run_cli("synth", "--out", out, "--n-features", 10, "--n-a", 24, "--n-b", 24,
                   "--planted-shared", "0,1", "--planted-a-only", "2",
                   "--planted-b-only", "3", "--effect-shared", 6.0, "--seed", 5)
    assert code == 0
    return out


@pytest.fixture(scope="module")
def across_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("sweeps") / "across"
    code = run_cli("sweep", "--data-a", synth_dir / "domain_a.csv",
                   "--data-b", synth_dir / "domain_b.csv", "--label-column", "label",
                   "--out", out, *SWEEP_FLAGS)
    assert code == 0
    return out


@pytest.fixture(scope="module")
def single_dirs(synth_dir, tmp_path_factory):
    root = tmp_path_factory.mktemp("singles")
    dirs = {}
    for mode in ("single-a", "single-b"):
        out = root / mode
        code = run_cli("sweep", "--data-a", synth_dir / "domain_a.csv",
                       "--data-b", synth_dir / "domain_b.csv", "--label-column", "label",
                       "--out", out, "--mode", mode, *SWEEP_FLAGS)
        assert code == 0
        dirs[mode] = out
    return dirs


class TestSynth:
    def test_outputs(self, synth_dir):
        assert (synth_dir / "domain_a.csv").is_file()
        assert (synth_dir / "domain_b.csv").is_file()
        truth = json.loads((synth_dir / "ground_truth.json").read_text())
        assert truth["planted_shared"] == [0, 1]
        assert truth["planted_shared_features"] == ["g0000", "g0001"]
        ds = load_dataset(synth_dir / "domain_a.csv", "a", "label")
        assert ds.n_samples == 24 and ds.n_features == 10

    def test_effective_config_echoed(self, synth_dir):
        cfg = json.loads((synth_dir / "effective_config.json").read_text())
        assert cfg["synthetic"]["d"] == 10
        assert cfg["synthetic"]["noise_seed"] == 5

    def test_seed_repeat_identical_files(self, tmp_path):
        args = ["synth", "--n-features", 6, "--n-a", 8, "--n-b", 8,
                "--planted-shared", "0", "--planted-a-only", "", "--planted-b-only", "",
                "--seed", 9]
        assert run_cli(*args, "--out", tmp_path / "one") == 0
        assert run_cli(*args, "--out", tmp_path / "two") == 0
        for name in ("domain_a.csv", "domain_b.csv", "ground_truth.json"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_overlapping_planted_sets_fail(self, tmp_path, capsys):
        code = run_cli("synth", "--out", tmp_path, "--n-features", 10,
                       "--planted-shared", "1,2", "--planted-a-only", "2",
                       "--planted-b-only", "")
        assert code == 2
        err = capsys.readouterr().err
        assert "overlapping planted sets" in err and "2" in err

    def test_missing_out_fails(self, capsys):
        assert run_cli("synth") == 2
        assert "out" in capsys.readouterr().err


class TestConfigFile:
    def test_config_file_applies(self, tmp_path):
        cfg = {"synthetic": {"d": 7, "n_a": 10, "n_b": 12, "planted_shared": [0],
                             "planted_a_only": [], "planted_b_only": [], "noise_seed": 3}}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert run_cli("synth", "--config", cfg_path, "--out", tmp_path / "o") == 0
        ds = load_dataset(tmp_path / "o" / "domain_a.csv", "a", "label")
        assert ds.n_features == 7 and ds.n_samples == 10

    def test_flag_overrides_config(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"synthetic": {"d": 7, "n_a": 10, "n_b": 10}}))
        assert run_cli("synth", "--config", cfg_path, "--out", tmp_path / "o",
                       "--n-features", 9, "--planted-shared", "0",
                       "--planted-a-only", "", "--planted-b-only", "") == 0
        ds = load_dataset(tmp_path / "o" / "domain_a.csv", "a", "label")
        assert ds.n_features == 9

    def test_unknown_section_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"synthetic": {}, "experiments": {}}))
        assert run_cli("synth", "--config", cfg_path, "--out", tmp_path / "o") == 2
        assert "unknown config sections" in capsys.readouterr().err

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"train": {"epoch": 5}}))
        assert run_cli("sweep", "--config", cfg_path, "--out", tmp_path / "o",
                       "--data-a", "x", "--data-b", "y", "--label-column", "l") == 2
        assert "unknown train config keys" in capsys.readouterr().err


class TestSweepCmd:
    def test_run_layout_and_echo(self, across_dir):
        assert (across_dir / "runs" / "0_0" / "mask.npy").is_file()
        assert (across_dir / "runs" / "0_1" / "checkpoint.npz").is_file()
        cfg = json.loads((across_dir / "effective_config.json").read_text())
        assert cfg["sweep"]["n_inits"] == 2
        assert cfg["train"]["epochs"] == 25
        assert cfg["train"]["loss_weights"]["reconstruction"] == 10.0

    def test_resume_complete_is_noop(self, synth_dir, across_dir, capsys, monkeypatch):
        import crossmask.sweep as sweep_mod

        def boom(*a, **k):
            raise AssertionError("must not retrain")

        monkeypatch.setattr(sweep_mod, "train_one", boom)
        code = run_cli("sweep", "--data-a", synth_dir / "domain_a.csv",
                       "--data-b", synth_dir / "domain_b.csv", "--label-column", "label",
                       "--out", across_dir, "--resume", *SWEEP_FLAGS)
        assert code == 0
        assert "runs completed: 2" in capsys.readouterr().out

    def test_single_mode(self, single_dirs):
        for out in single_dirs.values():
            cfg = json.loads((out / "config.json").read_text())
            assert cfg["mode"].startswith("single-")
            assert (out / "runs" / "0_1" / "mask.npy").is_file()

    def test_missing_data_file(self, tmp_path, capsys):
        code = run_cli("sweep", "--data-a", tmp_path / "nope.csv",
                       "--data-b", tmp_path / "nope2.csv", "--label-column", "label",
                       "--out", tmp_path / "o", *SWEEP_FLAGS)
        assert code == 2
        assert "no such data file" in capsys.readouterr().err


class TestReportCmd:
    def test_across_only(self, across_dir, capsys):
        out = across_dir / "report"
        code = run_cli("report", "--sweep", across_dir, "--out", out)
        assert code == 0
        stdout = capsys.readouterr().out
        assert "overlap report skipped" in stdout
        assert "selected features:" in stdout
        assert (out / "feature_report.csv").is_file()
        assert (out / "feature_report_summary.json").is_file()
        assert (out / "frequency_curve.csv").is_file()
        assert (out / "loss_curves.csv").is_file()
        assert (out / "loss_curves.png").is_file()
        assert (out / "frequency_curve.png").is_file()

    def test_loss_curves_match_breakdown(self, across_dir):
        import csv

        out = across_dir / "report2"
        assert run_cli("report", "--sweep", across_dir, "--out", out) == 0
        with (out / "loss_curves.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2 * 25  # runs x epochs
        for row in rows[:5]:
            total = float(row["total"])
            partial = (float(row["reconstruction"]) + float(row["classification"])
                       + float(row["sparsity"]))
            assert partial <= total + 1e-9  # kl component is nonnegative

    def test_full_report_with_singles_data_and_truth(self, synth_dir, across_dir,
                                                     single_dirs, capsys):
        out = across_dir / "report_full"
        code = run_cli("report", "--sweep", across_dir,
                       "--single-a", single_dirs["single-a"],
                       "--single-b", single_dirs["single-b"],
                       "--data-a", synth_dir / "domain_a.csv",
                       "--data-b", synth_dir / "domain_b.csv",
                       "--label-column", "label", "--out", out)
        assert code == 0
        stdout = capsys.readouterr().out
        assert "overlap (across):" in stdout
        assert "recall" in stdout and "precision" in stdout  # sidecar auto-detected
        assert (out / "overlap_groups.csv").is_file()
        assert (out / "overlap_summary.json").is_file()
        assert (out / "latent_pca.csv").is_file()
        assert (out / "latent_pca.png").is_file()
        assert (out / "selection_metrics.json").is_file()
        overlap = json.loads((out / "overlap_summary.json").read_text())
        assert set(overlap["across"]) == {"Both", "DomainA", "DomainB", "None"}

    def test_empty_sweep_dir_fails(self, tmp_path, capsys):
        code = run_cli("report", "--sweep", tmp_path / "missing")
        assert code == 2


class TestSelectionMetrics:
    def test_perfect_recovery(self):
        m = selection_metrics({"g1", "g2"}, {"g1", "g2"})
        assert m["recall"] == 1.0 and m["precision"] == 1.0

    def test_partial(self):
        m = selection_metrics({"g1", "g3"}, {"g1", "g2"})
        assert m["recall"] == 0.5 and m["precision"] == 0.5

    def test_empty_selection(self):
        m = selection_metrics(set(), {"g1"})
        assert m["recall"] == 0.0 and m["precision"] == 0.0
