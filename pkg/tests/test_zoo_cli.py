import json
from pathlib import Path

import numpy as np
import pytest

from qncd.cli import main
from qncd.dataset import read_qncd
from qncd.errors import ValidationError
from qncd.zoo import MODEL_NAMES, resolve, search_space, svm_config_grid


@pytest.fixture(scope="module")
def toy_file(tmp_path_factory):
    # small but non-trivial dataset shared by the CLI tests
    path = tmp_path_factory.mktemp("data") / "toy.qncd"
    code = main(
        [
            "generate", "--task", "iid", "--t-total", "0.1", "--steps", "4",
            "--nodes", "10", "--samples", "400", "--seed", "5", "--out", str(path),
        ]
    )
    assert code == 0
    return path


class TestZoo:
    def test_roster_has_twelve_models(self):
        assert len(MODEL_NAMES) == 12

    def test_feature_modes(self):
        assert resolve("m-SVM-single").feature_mode == "final"
        assert resolve("m-MLP-single").feature_mode == "final"
        for name in MODEL_NAMES:
            if not name.endswith("-single"):
                assert resolve(name).feature_mode == "full"

    def test_case_insensitive(self):
        assert resolve("M-BIGRU-MAX").name == "m-biGRU-max"

    def test_unknown_model(self):
        with pytest.raises(ValidationError):
            resolve("nonsense")

    def test_svm_grid_covers_design_space(self):
        xs = np.random.default_rng(0).random((64, 12))
        grid = svm_config_grid(xs)
        kinds = {(k.kind, k.degree) for k, _ in grid}
        assert ("linear", None) in kinds
        assert {("poly", 2), ("poly", 3), ("poly", 4)} <= kinds
        assert sorted({c for _, c in grid}) == [0.1, 1.0, 10.0, 100.0]
        gammas = {k.gamma for k, _ in grid if k.kind == "rbf"}
        assert len(gammas) == 3 and all(g > 0 for g in gammas)

    def test_nm_short_time_widens_layers(self):
        space = search_space(resolve("m-biGRU-max"), nm_short_time=True)
        assert space.layer_range == (1, 6)
        assert search_space(resolve("m-biGRU-max")).layer_range == (1, 4)


class TestGenerateCommand:
    def test_odd_samples_rejected(self, tmp_path, capsys):
        code = main(
            [
                "generate", "--task", "iid", "--t-total", "0.1", "--samples", "3",
                "--seed", "1", "--out", str(tmp_path / "x.qncd"),
            ]
        )
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_identical_flags_identical_files(self, tmp_path):
        args = [
            "generate", "--task", "vs", "--t-total", "1", "--steps", "3",
            "--nodes", "6", "--samples", "40", "--seed", "9",
        ]
        a, b = tmp_path / "a.qncd", tmp_path / "b.qncd"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_header_summary_printed(self, toy_file, capsys):
        ds = read_qncd(toy_file)
        assert ds.spec.task == "iid"
        assert len(ds) == 400


class TestTrainEvalCommands:
    def test_svm_train_and_eval(self, toy_file, tmp_path, capsys):
        model = tmp_path / "svm.json"
        assert main(
            ["train", "--model", "m-svm-single", "--data", str(toy_file),
             "--seed", "1", "--out", str(model)]
        ) == 0
        report = json.loads((tmp_path / "svm.json.report.json").read_text())
        assert report["model"] == "m-SVM-single"
        assert 0.0 <= report["test_accuracy"] <= 100.0
        capsys.readouterr()
        assert main(["eval", "--model", str(model), "--data", str(toy_file)]) == 0
        out = capsys.readouterr().out
        assert "gamma[test]" in out

    def test_train_split_warns(self, toy_file, tmp_path, capsys):
        model = tmp_path / "svm.json"
        main(["train", "--model", "m-svm-single", "--data", str(toy_file), "--seed", "1", "--out", str(model)])
        capsys.readouterr()
        assert main(["eval", "--model", str(model), "--data", str(toy_file), "--split", "train"]) == 0
        assert "optimistic" in capsys.readouterr().out

    def test_leakage_detection(self, toy_file, tmp_path, monkeypatch):
        model = tmp_path / "svm.json"
        main(["train", "--model", "m-svm-single", "--data", str(toy_file), "--seed", "1", "--out", str(model)])
        # make the eval split resolve to the training members
        import qncd.cli as cli_mod

        real_split = cli_mod.split

        def swapped(ds, fractions):
            tr, va, te = real_split(ds, fractions)
            return te, va, tr

        monkeypatch.setattr(cli_mod, "split", swapped)
        assert main(["eval", "--model", str(model), "--data", str(toy_file)]) == 2

    def test_neural_train_writes_model_and_csv(self, toy_file, tmp_path):
        model = tmp_path / "gru.qnnm"
        assert main(
            ["train", "--model", "m-GRU", "--data", str(toy_file), "--seed", "2",
             "--out", str(model), "--epochs", "2"]
        ) == 0
        assert model.exists()
        assert (tmp_path / "gru.qnnm.epochs.csv").read_text().startswith("epoch,")
        record = json.loads((tmp_path / "gru.qnnm.report.json").read_text())
        assert record["train_report"]["epochs_run"] <= 2

    def test_search_budget(self, toy_file, tmp_path):
        model = tmp_path / "searched.qnnm"
        assert main(
            ["train", "--model", "m-biGRU-max", "--data", str(toy_file), "--seed", "3",
             "--out", str(model), "--epochs", "2", "--budget", "3"]
        ) == 0
        record = json.loads((tmp_path / "searched.qnnm.report.json").read_text())
        trials = record["train_report"]["meta"]["trials"]
        assert len(trials) == 3
        assert sum(t["winner"] for t in trials) == 1

    def test_unknown_model_is_data_error(self, toy_file, tmp_path):
        assert main(
            ["train", "--model", "nonsense", "--data", str(toy_file), "--seed", "1",
             "--out", str(tmp_path / "x")]
        ) == 2

    def test_usage_error_exit_code(self):
        assert main(["train", "--data", "missing.qncd"]) == 1


class TestSweepScalingReport:
    def test_scaling_dry_run(self, capsys):
        assert main(["scaling", "--dry-run", "--seed", "20"]) == 0
        out = capsys.readouterr().out
        assert "delta-prime > delta" in out and "steps=30" in out

    def test_sweep_dedupes_and_writes_csv(self, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main(
            ["sweep-m", "--task", "iid", "--t-total", "0.5", "--m-list", "2,3,2",
             "--model", "m-GRU", "--seed", "4", "--samples", "80", "--nodes", "6",
             "--epochs", "2", "--out-dir", str(out_dir)]
        )
        assert code == 0
        csv = next((out_dir / "reports").glob("sweep-*.csv")).read_text().strip().splitlines()
        assert csv[0] == "M,gamma"
        assert len(csv) == 3  # deduplicated: M=2 and M=3 only

    def test_sweep_caches_datasets(self, tmp_path):
        out_dir = tmp_path / "out"
        args = ["sweep-m", "--task", "iid", "--t-total", "0.5", "--m-list", "2",
                "--model", "m-GRU", "--seed", "4", "--samples", "80", "--nodes", "6",
                "--epochs", "1", "--out-dir", str(out_dir)]
        assert main(args) == 0
        datasets = list((out_dir / "datasets").glob("*.qncd"))
        stamps = {p: p.stat().st_mtime_ns for p in datasets}
        assert main(args) == 0
        assert {p: p.stat().st_mtime_ns for p in datasets} == stamps

    def test_report_empty_and_filled(self, tmp_path, toy_file, capsys):
        out_dir = tmp_path / "out"
        assert main(["report", "--out-dir", str(out_dir)]) == 0
        table = (out_dir / "reports" / "results_table.csv").read_text().splitlines()
        assert len(table) == 13  # header + 12 roster rows
        model = out_dir / "models" / "svm.json"
        main(["train", "--model", "m-svm-single", "--data", str(toy_file), "--seed", "1", "--out", str(model)])
        capsys.readouterr()
        assert main(["report", "--out-dir", str(out_dir)]) == 0
        out = capsys.readouterr().out
        row = [l for l in out.splitlines() if l.startswith("m-SVM-single")][0]
        assert "-" in row  # other cells missing
        cells = row.split()
        assert any(c.replace(".", "").isdigit() for c in cells[1:])