"""Tests for the command-line driver: verbs, config files, exit codes,
and the files each verb writes."""

import json
import os

import numpy as np
import pytest

from tensorfuse.cli import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_DIVERGENCE,
    EXIT_OK,
    main,
    read_config_file,
)
from tensorfuse.data import load_csv
from tensorfuse.experiment import ConfigError
from tensorfuse.tensor import load_tensor

FAST = [
    "--n", "120", "--k", "3", "--max-depth", "4",
    "--min-leaf", "5", "--max-iters", "15",
]


def run(argv):
    code = main(argv)
    assert isinstance(code, int)
    return code


class TestGenData:
    def test_writes_loadable_csv(self, tmp_path, capsys):
        out = str(tmp_path / "d")
        assert run(["gen-data", "--n", "40", "--out", out]) == EXIT_OK
        message = capsys.readouterr().out
        assert "40 rows, 2 classes" in message
        ds = load_csv(os.path.join(out, "double-ring.csv"), "label")
        assert ds.num_samples == 40

    def test_blobs_variant(self, tmp_path, capsys):
        out = str(tmp_path / "d")
        code = run(["gen-data", "--dataset", "blobs", "--n", "30",
                    "--classes", "4", "--out", out])
        assert code == EXIT_OK
        assert "4 classes" in capsys.readouterr().out
        assert os.path.exists(os.path.join(out, "blobs.csv"))

    def test_unsupported_dataset(self, tmp_path, capsys):
        code = run(["gen-data", "--dataset", "csv", "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        assert "configuration error" in capsys.readouterr().err


class TestTrainVerb:
    def test_writes_artifacts_and_summary(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        assert run(["train", *FAST, "--out", out]) == EXIT_OK
        stdout = capsys.readouterr().out
        assert "trained 3-learner tensor on 96 samples" in stdout
        assert "final loss" in stdout and "converged" in stdout
        for name in ("tensor.json", "ensemble.json",
                     "convergence.csv", "convergence.png"):
            path = os.path.join(out, name)
            assert os.path.exists(path)
            assert f"wrote {path}" in stdout
        theta, weights = load_tensor(os.path.join(out, "tensor.json"))
        assert theta.num_classes == 2 and theta.num_learners == 3


class TestCompareVerb:
    def test_writes_reports_and_prints_table(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        code = run(["compare", *FAST, "--baselines", "5", "--out", out])
        assert code == EXIT_OK
        stdout = capsys.readouterr().out
        for method in ("fused-3", "vote-3", "weighted-vote-3", "rf-5"):
            assert method in stdout
        names = {
            "tensor.json", "ensemble.json", "convergence.csv",
            "convergence.png", "report.csv", "report.txt",
            "comparison.png", "slices.png",
        }
        assert set(os.listdir(out)) == names

    def test_empty_baselines_skip_forests(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        code = run(["compare", *FAST, "--baselines", "", "--out", out])
        assert code == EXIT_OK
        report = open(os.path.join(out, "report.csv")).read()
        assert "rf-" not in report


class TestConvergenceVerb:
    def test_writes_trace_only(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        assert run(["convergence", *FAST, "--out", out]) == EXIT_OK
        assert set(os.listdir(out)) == {"convergence.csv", "convergence.png"}
        header = open(os.path.join(out, "convergence.csv")).readline()
        assert header.startswith("# reference_iterations:")


class TestInspectVerb:
    def trained_tensor(self, tmp_path):
        out = str(tmp_path / "run")
        assert main(["train", *FAST, "--out", out]) == EXIT_OK
        return os.path.join(out, "tensor.json")

    def test_prints_per_learner_lines(self, tmp_path, capsys):
        tensor_path = self.trained_tensor(tmp_path)
        capsys.readouterr()
        assert run(["inspect", "--tensor", tensor_path]) == EXIT_OK
        stdout = capsys.readouterr().out
        assert stdout.count("learner") == 3
        assert "vote 0:" in stdout and "strongest evidence row" in stdout

    def test_out_directory_gets_text_and_figure(self, tmp_path, capsys):
        tensor_path = self.trained_tensor(tmp_path)
        out = str(tmp_path / "diag")
        code = run(["inspect", "--tensor", tensor_path, "--out", out])
        assert code == EXIT_OK
        assert set(os.listdir(out)) == {"slices.txt", "slices.png"}

    def test_missing_flag_is_config_error(self, capsys):
        assert run(["inspect"]) == EXIT_CONFIG
        assert "requires --tensor" in capsys.readouterr().err

    def test_absent_file_is_data_error(self, tmp_path, capsys):
        code = run(["inspect", "--tensor", str(tmp_path / "nope.json")])
        assert code == EXIT_DATA

    def test_corrupt_file_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(["inspect", "--tensor", str(bad)]) == EXIT_DATA


class TestExitCodes:
    def test_unknown_flag(self, tmp_path, capsys):
        assert run(["train", "--warp", "9"]) == EXIT_CONFIG

    def test_missing_verb(self, capsys):
        assert run([]) == EXIT_CONFIG

    def test_bad_configuration_value(self, tmp_path, capsys):
        code = run(["train", *FAST, "--gamma", "never",
                    "--out", str(tmp_path / "o")])
        assert code == EXIT_CONFIG

    def test_bad_batch_and_baselines(self, tmp_path, capsys):
        out = str(tmp_path / "o")
        assert run(["train", *FAST, "--batch", "half", "--out", out]) == EXIT_CONFIG
        assert run(["compare", *FAST, "--baselines", "a,b",
                    "--out", out]) == EXIT_CONFIG

    def test_missing_csv_is_data_error(self, tmp_path, capsys):
        code = run(["train", "--dataset", "csv",
                    "--csv", str(tmp_path / "absent.csv"),
                    "--out", str(tmp_path / "o")])
        assert code == EXIT_DATA

    def test_numeric_overflow_is_divergence(self, tmp_path, capsys):
        with np.errstate(over="ignore", invalid="ignore"):
            code = run(["train", *FAST, "--gamma", "1e308",
                        "--out", str(tmp_path / "o")])
        assert code == EXIT_DIVERGENCE
        assert "numeric divergence" in capsys.readouterr().err


class TestConfigFile:
    def test_file_values_apply(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# generated dataset size\nn = 50\nseed = 3\n")
        out = str(tmp_path / "d")
        code = run(["gen-data", "--config", str(cfg), "--out", out])
        assert code == EXIT_OK
        assert "50 rows" in capsys.readouterr().out

    def test_explicit_flag_beats_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n = 50\n")
        out = str(tmp_path / "d")
        code = run(["gen-data", "--config", str(cfg), "--n", "26", "--out", out])
        assert code == EXIT_OK
        assert "26 rows" in capsys.readouterr().out

    def test_unknown_key_for_verb(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("tensor = somewhere.json\n")
        code = run(["gen-data", "--config", str(cfg), "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        assert "unknown config key" in capsys.readouterr().err

    def test_missing_file_and_bad_lines(self, tmp_path, capsys):
        assert run(["train", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just words\n")
        assert run(["train", "--config", str(cfg)]) == EXIT_CONFIG

    def test_read_config_file_parsing(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("a = 1 # tail comment\n\n# full comment\nb = two words\n")
        assert read_config_file(str(cfg)) == {"a": "1", "b": "two words"}
        empty_value = tmp_path / "empty.cfg"
        empty_value.write_text("a =\n")
        with pytest.raises(ConfigError):
            read_config_file(str(empty_value))

    def test_boolean_key_parsing(self, tmp_path, capsys):
        csv_file = tmp_path / "plain.csv"
        csv_file.write_text(
            "\n".join(f"{i * 0.1},{i % 2}" for i in range(40)) + "\n"
        )
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"dataset = csv\ncsv = {csv_file}\nlabel-col = 1\nno-header = yes\n"
        )
        out = str(tmp_path / "o")
        code = run(["train", "--config", str(cfg), "--k", "3",
                    "--max-depth", "3", "--min-leaf", "2",
                    "--max-iters", "10", "--out", out])
        assert code == EXIT_OK
        bad = tmp_path / "bad.cfg"
        bad.write_text("no-header = maybe\n")
        assert run(["train", "--config", str(bad)]) == EXIT_CONFIG
