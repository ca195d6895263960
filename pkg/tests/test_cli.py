import json
import os

import pytest

from src.command.executor import RUN_CONFIG_NAME, CommandExecutor
from src.command.parser import CommandParser, UsageError
from src.config.manager import ConfigManager
from src.errors import FitError
from src.theory.bounds import BoundReport


def make_executor(output_root, lines=None):
    manager = ConfigManager()
    manager.set("CATO_OUTPUT_DIR", str(output_root))
    manager.set("CATO_SEED", 0)
    manager.set("CATO_NUM_WORKERS", 1)
    sink = lines if lines is not None else []
    return CommandExecutor(manager, output=sink.append)


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    dataset = str(root / "darcy9")
    argv = ["generate", "--dataset", dataset, "--resolution", "9", "--train-samples", "4", "--test-samples", "2"]
    assert make_executor(root).execute_command(argv + ["--pc-points", "20", "--seed", "3"]) == 0
    return dataset


@pytest.fixture(scope="module")
def trained_run(cli_dataset, tmp_path_factory):
    run_dir = str(tmp_path_factory.mktemp("run") / "tiny")
    argv = ["train", "--dataset", cli_dataset, "--preset", "tiny", "--output-dir", run_dir]
    assert make_executor(run_dir).execute_command(argv) == 0
    return run_dir


def read_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def test_generate_writes_manifest(cli_dataset):
    manifest = read_json(os.path.join(cli_dataset, "manifest.json"))
    assert len(manifest["splits"]["train"]) == 4
    assert len(manifest["splits"]["test"]) == 2


def test_train_writes_checkpoint_and_config(trained_run):
    assert os.path.exists(os.path.join(trained_run, "model.cato1"))
    assert os.path.exists(os.path.join(trained_run, "metrics.jsonl"))
    with open(os.path.join(trained_run, "train.log"), "r", encoding="utf-8") as handle:
        assert "CST" in handle.read()
    saved = read_json(os.path.join(trained_run, RUN_CONFIG_NAME))
    assert saved["preset"] == "tiny"
    assert saved["optim"]["epochs"] == 2
    assert saved["data"]["seed"] == saved["seed"]


def test_reference_predictors_calibrate_metric(cli_dataset, tmp_path):
    lines = []
    executor = make_executor(tmp_path, lines)
    oracle_dir = str(tmp_path / "oracle")
    argv = ["eval", "--dataset", cli_dataset, "--output-dir", oracle_dir, "--predictor", "oracle"]
    assert executor.execute_command(argv) == 0
    assert read_json(os.path.join(oracle_dir, "eval.json"))["mean_rel_l2"] == 0.0

    zeros_dir = str(tmp_path / "zeros")
    argv = ["eval", "--dataset", cli_dataset, "--output-dir", zeros_dir, "--predictor", "zeros"]
    assert executor.execute_command(argv) == 0
    assert read_json(os.path.join(zeros_dir, "eval.json"))["mean_rel_l2"] == pytest.approx(1.0, rel=1e-6)
    assert any(line.startswith("== eval ==") for line in lines)


def test_eval_with_chart_dump_and_scaling(cli_dataset, trained_run):
    argv = [
        "eval",
        "--dataset",
        cli_dataset,
        "--output-dir",
        trained_run,
        "--chart-dump",
        "--scaling-sizes",
        "4,8,16",
        "--limit",
        "1",
    ]
    assert make_executor(trained_run).execute_command(argv) == 0
    report = read_json(os.path.join(trained_run, "eval.json"))
    assert len(report["per_sample"]) == 1
    assert report["extra"]["estimated_slope"] == pytest.approx(3.0)
    assert "measured_slope" in report["extra"]
    assert os.path.exists(os.path.join(trained_run, "chart.csv"))
    assert os.path.exists(os.path.join(trained_run, "chart.png"))


def test_missing_checkpoint_is_a_usage_error(cli_dataset, tmp_path):
    argv = ["eval", "--dataset", cli_dataset, "--output-dir", str(tmp_path / "empty")]
    assert make_executor(tmp_path).execute_command(argv) == 1


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["deploy"],
        ["--seed", "1"],
        ["train", "--learning-rate", "0.1"],
        ["train", "--preset", "imagenet"],
        ["train", "--loss-preset", "stokes"],
        ["generate", "--resolution", "two"],
    ],
)
def test_usage_errors_exit_with_one(argv, tmp_path):
    assert make_executor(tmp_path).execute_command(argv) == 1


def test_failed_bound_exits_with_three(monkeypatch, tmp_path):
    failing = [BoundReport(name="chart-stability", measured=2.0, bound=1.0, samples=10)]
    monkeypatch.setattr("src.command.executor.run_theory_suite", lambda config: failing)
    lines = []
    assert make_executor(tmp_path, lines).execute_command(["verify-theory", "--grid", "4"]) == 3
    assert lines == ["FAIL chart-stability: measured=2.0000e+00 bound=1.0000e+00"]
    saved = read_json(os.path.join(tmp_path, "verify-theory", "theory_reports.json"))
    assert saved[0]["passed"] is False


def test_construction_failure_exits_with_two(monkeypatch, tmp_path):
    def fail(config):
        raise FitError("宽度预算不足")

    monkeypatch.setattr("src.command.executor.run_theory_suite", fail)
    assert make_executor(tmp_path).execute_command(["verify", "--grid", "4"]) == 2


def test_passing_theory_suite_exits_with_zero(monkeypatch, tmp_path):
    seen = {}

    def passing(config):
        seen["config"] = config
        return [BoundReport(name="ok", measured=0.1, bound=0.2, samples=1)]

    monkeypatch.setattr("src.command.executor.run_theory_suite", passing)
    argv = ["verify-theory", "--grid", "6", "--delta", "0.02", "--seed", "4"]
    assert make_executor(tmp_path).execute_command(argv) == 0
    assert seen["config"].grid == 6
    assert seen["config"].delta == 0.02
    assert seen["config"].seed == 4


def test_point_cloud_commands(cli_dataset, tmp_path):
    run_dir = str(tmp_path / "pc")
    pc_flags = ["--pc-layers", "1", "--pc-channels", "8", "--pc-heads", "2", "--k", "4"]
    argv = ["train-pc", "--dataset", cli_dataset, "--output-dir", run_dir, "--epochs", "1", "--batch-size", "2"]
    executor = make_executor(tmp_path)
    assert executor.execute_command(argv + pc_flags) == 0
    assert os.path.exists(os.path.join(run_dir, "model.cato1"))
    assert executor.execute_command(["eval-pc", "--dataset", cli_dataset, "--output-dir", run_dir]) == 0
    assert "mean_rel_l2" in read_json(os.path.join(run_dir, "eval_pc.json"))


def test_flags_override_config_file(cli_dataset, tmp_path):
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps({"preset": "tiny", "optim": {"epochs": 5, "lr": 2e-3}}), encoding="utf-8")
    argv = ["train", "--config", str(config_path), "--dataset", cli_dataset, "--epochs", "0"]
    assert make_executor(tmp_path).execute_command(argv) == 0
    saved = read_json(os.path.join(tmp_path, "train", RUN_CONFIG_NAME))
    assert saved["optim"]["epochs"] == 0
    assert saved["optim"]["lr"] == 2e-3


def test_loss_preset_fills_unset_weights(cli_dataset, tmp_path):
    argv = ["train", "--preset", "tiny", "--dataset", cli_dataset, "--epochs", "0", "--loss-preset", "zero"]
    assert make_executor(tmp_path).execute_command(argv + ["--lambda-g", "0.3"]) == 0
    saved = read_json(os.path.join(tmp_path, "train", RUN_CONFIG_NAME))
    assert saved["loss"]["lambda_g"] == 0.3
    assert saved["loss"]["lambda_f"] == 0.0


def test_parser_normalizes_aliases():
    parser = CommandParser()
    assert parser.parse(["fit", "--epochs", "3"])[0] == "train"
    assert parser.parse(["EVALUATE"])[0] == "eval"
    assert parser.parse(["verify_theory"])[0] == "verify-theory"
    cmd, namespace = parser.parse(["train", "--lr", "0.01", "--layers", "3"])
    assert parser.overrides(namespace) == {"optim.lr": 0.01, "model.layers": 3}
    with pytest.raises(UsageError):
        parser.parse([])
