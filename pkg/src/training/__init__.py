from src.training.flops import attention_scaling, estimate_flops, fit_scaling_exponent, measure_flops
from src.training.metrics import MetricsWriter, read_metrics
from src.training.evaluate import (
    PREDICTORS,
    EvalReport,
    evaluate_model,
    evaluate_pc,
    gradient_mse,
    per_sample_errors,
    predict_split,
)
from src.training.trainer import OptimConfig, PcTrainer, Trainer, TrainResult, pc_normalizer_stats

__all__ = [
    "attention_scaling",
    "estimate_flops",
    "fit_scaling_exponent",
    "measure_flops",
    "MetricsWriter",
    "read_metrics",
    "PREDICTORS",
    "EvalReport",
    "evaluate_model",
    "evaluate_pc",
    "gradient_mse",
    "per_sample_errors",
    "predict_split",
    "OptimConfig",
    "PcTrainer",
    "Trainer",
    "TrainResult",
    "pc_normalizer_stats",
]
