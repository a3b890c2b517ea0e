"""End-to-end tests for the driftnas command line."""

from __future__ import annotations

import csv
import json
import os

import pytest

from driftnas.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, EXIT_TRAIN, main
from driftnas.dataset import Dataset
from driftnas.surrogate import SurrogateEnsemble

SMALL_DATASET = ["--set", "dataset.n_lhs=30", "--set", "backend.n_trials=2"]
SMALL_MODEL = ["--set", "surrogate.n_rounds=10", "--set", "surrogate.max_depth=3"]
SMALL_SEARCH = [
    "--set", "search.population_size=10",
    "--set", "search.n_iterations=4",
    "--set", "search.surrogate_check_interval=2",
    "--set", "search.verify_top_k=2",
    "--set", "backend.n_trials=2",
]


@pytest.fixture(autouse=True)
def _isolated(tmp_path, monkeypatch):
    """Run every command from an empty directory with no DRIFTNAS_* settings."""
    monkeypatch.chdir(tmp_path)
    for name in [n for n in os.environ if n.startswith("DRIFTNAS_")]:
        monkeypatch.delenv(name)


class TestPipeline:
    def test_gen_train_search(self, tmp_path, capsys):
        ds_path = tmp_path / "ds.ndjson"
        assert main(["gen-dataset", "--out", str(ds_path), *SMALL_DATASET]) == EXIT_OK
        assert "Wrote 30 rows" in capsys.readouterr().out
        assert len(Dataset.load(ds_path)) == 30

        model_path = tmp_path / "model.json"
        assert main(["train-surrogate", str(ds_path), "--out", str(model_path), *SMALL_MODEL]) == EXIT_OK
        assert "kendall_tau" in capsys.readouterr().out
        SurrogateEnsemble.load(model_path)
        metrics = json.loads((tmp_path / "model.metrics.json").read_text())
        assert metrics["metrics"]["n"] == 6
        assert metrics["config"]["surrogate"]["n_rounds"] == 10

        result_path = tmp_path / "result.json"
        code = main(["search", str(model_path), "--out", str(result_path), "--set", "search.t_avm=0.5", *SMALL_SEARCH])
        assert code == EXIT_OK
        assert "Best architecture:" in capsys.readouterr().out
        result = json.loads(result_path.read_text())
        assert result["generations"] == 4
        assert result["harvested_path"] == "result.harvested.ndjson"
        assert "wall_time" not in result
        assert len(Dataset.load(tmp_path / "result.harvested.ndjson")) == result["harvested_rows"]

    def test_default_output_dir(self, tmp_path):
        assert main(["gen-dataset", *SMALL_DATASET, "--set", "dataset.n_lhs=5"]) == EXIT_OK
        assert (tmp_path / "runs" / "dataset.ndjson").is_file()

    def test_search_is_reproducible(self, tmp_path, capsys):
        outputs = []
        for sub, workers in (("a", "1"), ("b", "1"), ("c", "2")):
            out = tmp_path / sub / "result.json"
            assert main(["search", "--oracle", "--out", str(out), "--workers", workers, *SMALL_SEARCH]) == EXIT_OK
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]

    def test_sweep(self, tmp_path, capsys):
        out = tmp_path / "sweep" / "result.json"
        code = main(["search", "--oracle", "--out", str(out), "--sweep-t-avm", "0.05,0.1", *SMALL_SEARCH])
        assert code == EXIT_OK
        with (tmp_path / "sweep" / "sweep.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["t_avm"]) for r in rows] == [0.05, 0.1]
        assert all(r["status"] == "verified" for r in rows)
        assert (tmp_path / "sweep" / "result.t_avm_0.05.json").is_file()


class TestEvaluateAndDescribe:
    def test_evaluate_reference(self, tmp_path, capsys):
        assert main(["evaluate", "cifar10_t500", "resnet32_cifar", "--set", "backend.n_trials=2"]) == EXIT_OK
        assert "cifar10_t500:" in capsys.readouterr().out
        payload = json.loads((tmp_path / "runs" / "records.json").read_text())
        assert [r["name"] for r in payload["records"]] == ["cifar10_t500", "resnet32_cifar"]
        with (tmp_path / "runs" / "drift_curve.csv").open() as fh:
            assert len(list(csv.DictReader(fh))) == 6

    def test_evaluate_file(self, tmp_path, t500, capsys):
        path = tmp_path / "mine.json"
        path.write_text(t500.to_json())
        assert main(["evaluate", str(path), "--out", str(tmp_path / "eval")]) == EXIT_OK
        assert "mine:" in capsys.readouterr().out

    def test_describe(self, capsys):
        assert main(["describe", "resnet32_cifar"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "Depth: 32" in out
        assert "Crossbar weights: 464,432" in out
        assert "43" in out


class TestExitCodes:
    def test_unknown_architecture(self, capsys):
        assert main(["describe", "no_such_net"]) == EXIT_INPUT
        assert "error:" in capsys.readouterr().err

    def test_bad_override(self, capsys):
        assert main(["describe", "resnet32_cifar", "--set", "search.population_size=7"]) == EXIT_INPUT

    def test_missing_dataset(self, tmp_path):
        assert main(["train-surrogate", str(tmp_path / "absent.ndjson")]) == EXIT_INPUT

    def test_search_needs_model(self):
        assert main(["search"]) == EXIT_INPUT

    def test_too_few_rows(self, tmp_path):
        ds_path = tmp_path / "one.ndjson"
        assert main(["gen-dataset", "--out", str(ds_path), "--set", "dataset.n_lhs=1"]) == EXIT_OK
        assert main(["train-surrogate", str(ds_path)]) == EXIT_TRAIN

    def test_infeasible(self, capsys):
        args = ["search", "--oracle", *SMALL_SEARCH, "--set", "search.t_avm=1e-9", "--set", "search.cull_retries=2"]
        assert main(args) == EXIT_INFEASIBLE
        err = capsys.readouterr().err
        assert '"ever_feasible": 0' in err
