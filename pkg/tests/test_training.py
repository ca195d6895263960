import math
import os

import numpy as np
import pytest

from src.data import DataConfig, load_point_clouds, load_split, write_dataset
from src.errors import NumericError
from src.model.cato import ModelState, load_model
from src.model.config import ARCH_PRESETS, CatoConfig
from src.physics.loss import LOSS_PRESETS, LossWeights
from src.pointcloud.model import PcConfig, PcModelState
from src.training import (
    MetricsWriter,
    OptimConfig,
    PcTrainer,
    Trainer,
    attention_scaling,
    estimate_flops,
    evaluate_model,
    evaluate_pc,
    fit_scaling_exponent,
    measure_flops,
    per_sample_errors,
    read_metrics,
)

TINY = CatoConfig(layers=1, channels=8, heads=2, chart_hidden=8)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("data") / "darcy9")
    write_dataset(root, DataConfig(resolution=9, train_samples=4, test_samples=2, contrast=4.0, seed=3, pc_points=24))
    return root


def test_zero_epochs_keep_initial_parameters(tiny_dataset, tmp_path):
    train, test = load_split(tiny_dataset, "train"), load_split(tiny_dataset, "test")
    ms = ModelState(TINY, seed=1)
    initial = ms.state_dict()
    result = Trainer(ms, train, test, LOSS_PRESETS["darcy"], OptimConfig(epochs=0), str(tmp_path)).run()
    assert result.epochs_completed == 0
    assert result.steps == 0
    restored = load_model(result.checkpoint)
    for name, value in initial.items():
        np.testing.assert_array_equal(restored.state_dict()[name], value)
    assert restored.normalizer("target_std") is not None


def test_short_training_run_writes_metrics(tiny_dataset, tmp_path):
    train, test = load_split(tiny_dataset, "train"), load_split(tiny_dataset, "test")
    ms = ModelState(TINY, seed=2)
    optim = OptimConfig(lr=1e-3, batch_size=2, epochs=2, checkpoint_every=1)
    result = Trainer(ms, train, test, LOSS_PRESETS["darcy"], optim, str(tmp_path), seed=5).run()
    assert result.epochs_completed == 2
    assert result.steps == 4
    assert not result.interrupted
    assert os.path.exists(result.checkpoint)
    records = read_metrics(str(tmp_path / "metrics.jsonl"))
    assert [record["event"] for record in records] == ["epoch", "epoch", "final"]
    assert all(math.isfinite(record["total"]) for record in records[:2])
    assert "test_rel_l2" in records[0]
    assert math.isfinite(result.final_eval.mean_rel_l2)
    assert not np.all(ms.readout_u.W.data == 0.0)


def test_training_is_reproducible(tiny_dataset, tmp_path):
    train, test = load_split(tiny_dataset, "train"), load_split(tiny_dataset, "test")
    optim = OptimConfig(lr=1e-3, batch_size=2, epochs=1)
    states = []
    for run in ("a", "b"):
        ms = ModelState(TINY, seed=4)
        Trainer(ms, train, test, LOSS_PRESETS["zero"], optim, str(tmp_path / run), seed=9).run()
        states.append(ms.state_dict())
    for name in states[0]:
        np.testing.assert_array_equal(states[0][name], states[1][name])


def test_non_finite_loss_aborts(tiny_dataset, tmp_path):
    train, test = load_split(tiny_dataset, "train"), load_split(tiny_dataset, "test")
    ms = ModelState(TINY, seed=1)
    ms.set_normalizer(
        {"feat_mean": np.zeros(1), "feat_std": np.ones(1), "target_mean": np.zeros(1), "target_std": np.ones(1)}
    )
    ms.readout_u.W.data[:] = 1e300
    ms.readout_u.b.data[:] = 1e300
    trainer = Trainer(ms, train, test, LossWeights(), OptimConfig(epochs=1), str(tmp_path))
    with pytest.raises(NumericError):
        trainer.run()


def test_trainer_validation(tiny_dataset, tmp_path):
    train = load_split(tiny_dataset, "train")
    empty = load_split(tiny_dataset, "train", limit=0)
    with pytest.raises(ValueError):
        Trainer(ModelState(TINY), empty, empty, LossWeights(), OptimConfig(epochs=1), str(tmp_path))
    with pytest.raises(ValueError):
        Trainer(ModelState(TINY), train, empty, LossWeights(), OptimConfig(lr=0.0), str(tmp_path))


def test_reference_predictors(tiny_dataset):
    test = load_split(tiny_dataset, "test")
    oracle = evaluate_model(None, test, predictor="oracle")
    assert oracle.mean_rel_l2 == 0.0
    assert oracle.extra["grad_mse"] == 0.0
    zeros = evaluate_model(None, test, predictor="zeros")
    assert zeros.mean_rel_l2 == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(ValueError):
        evaluate_model(None, test, predictor="model")
    with pytest.raises(ValueError):
        evaluate_model(None, test, predictor="median")


def test_model_evaluation_report(tiny_dataset):
    test = load_split(tiny_dataset, "test")
    ms = ModelState(TINY)
    report = evaluate_model(ms, test)
    assert len(report.per_sample) == 2
    assert report.mean_rel_l2 == pytest.approx(np.mean(report.per_sample))
    assert report.param_count == ms.parameter_count()
    assert report.flops == estimate_flops(TINY, 9, 9)["total"]
    # 零初始化读出且无归一化统计量时预测恒为 0
    assert report.mean_rel_l2 == pytest.approx(1.0, rel=1e-6)


def test_per_sample_errors():
    targets = np.array([[3.0, 4.0], [1.0, 0.0]])
    predictions = np.array([[3.0, 4.0], [0.0, 0.0]])
    np.testing.assert_allclose(per_sample_errors(predictions, targets, eps=0.0), [0.0, 1.0])


def test_estimated_flops_match_counted_flops():
    for config in (TINY, CatoConfig(layers=2, channels=8, heads=2, chart_hidden=4, core_mode=True)):
        estimated = estimate_flops(config, 6, 5)
        measured = measure_flops(ModelState(config), 6, 5)
        assert measured["attention_scores"] == estimated["attention_scores"]
        assert measured["total"] == estimated["total"]


def test_attention_cost_grows_cubically():
    result = attention_scaling(TINY, sizes=(8, 16, 32), model=ModelState(TINY))
    assert result["estimated_slope"] == pytest.approx(3.0, abs=1e-9)
    assert result["measured_slope"] == pytest.approx(3.0, abs=0.3)
    assert fit_scaling_exponent([2, 4, 8], [16, 256, 4096]) == pytest.approx(4.0)


def test_metrics_writer_appends_lines(tmp_path):
    path = str(tmp_path / "logs" / "metrics.jsonl")
    writer = MetricsWriter(path)
    writer.write({"event": "epoch", "epoch": 1})
    writer.write({"event": "final", "mean_rel_l2": 0.5})
    records = read_metrics(path)
    assert [record["event"] for record in records] == ["epoch", "final"]
    assert "time" in records[0]
    with pytest.raises(FileNotFoundError):
        read_metrics(str(tmp_path / "missing.jsonl"))


def test_point_cloud_training_and_evaluation(tiny_dataset, tmp_path):
    train, test = load_point_clouds(tiny_dataset, "train"), load_point_clouds(tiny_dataset, "test")
    ms = PcModelState(PcConfig(layers=1, channels=8, heads=2, k=4, chart_hidden=8), seed=1)
    result = PcTrainer(ms, train, test, OptimConfig(lr=1e-3, batch_size=2, epochs=1), str(tmp_path)).run()
    assert result.steps == 2
    assert os.path.exists(result.checkpoint)
    assert math.isfinite(result.final_eval.mean_rel_l2)
    assert evaluate_pc(None, test, predictor="oracle").mean_rel_l2 == 0.0
    assert evaluate_pc(None, test, predictor="zeros").mean_rel_l2 == pytest.approx(1.0, rel=1e-6)


@pytest.fixture(scope="module")
def desk_dataset(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("desk") / "darcy32")
    write_dataset(root, DataConfig(resolution=32, train_samples=512, test_samples=64, seed=0), workers=4)
    return load_split(root, "train"), load_split(root, "test")


def _desk_run(config, weights, splits, output_dir):
    train, test = splits
    ms = ModelState(config, seed=0)
    optim = OptimConfig(lr=5e-4, batch_size=4, epochs=50)
    return Trainer(ms, train, test, weights, optim, output_dir).run().final_eval


@pytest.mark.slow
def test_desk_model_learns_and_beats_baseline(desk_dataset, tmp_path):
    desk = ARCH_PRESETS["desk"]
    cato = _desk_run(desk, LOSS_PRESETS["darcy"], desk_dataset, str(tmp_path / "cato"))
    baseline_config = CatoConfig(**{**desk.to_dict(), "variant": "lift-readout"})
    baseline = _desk_run(baseline_config, LOSS_PRESETS["darcy"], desk_dataset, str(tmp_path / "baseline"))
    assert cato.mean_rel_l2 < 0.10
    assert 2.0 * cato.mean_rel_l2 <= baseline.mean_rel_l2


@pytest.mark.slow
def test_physics_loss_does_not_hurt_gradients(desk_dataset, tmp_path):
    desk = ARCH_PRESETS["desk"]
    physics = _desk_run(desk, LOSS_PRESETS["darcy"], desk_dataset, str(tmp_path / "physics"))
    plain = _desk_run(desk, LOSS_PRESETS["zero"], desk_dataset, str(tmp_path / "plain"))
    assert physics.extra["grad_mse"] <= plain.extra["grad_mse"]
