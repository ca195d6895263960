"""评估：逐样本相对 L² 误差、墙钟时间、参数量与乘加估计"""

import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.autodiff.tensor import no_grad
from src.data.dataset import SplitArrays
from src.errors import ShapeError
from src.logging.logger_config import logger
from src.model.cato import ModelState, model_forward
from src.physics.loss import loss_grad
from src.physics.mesh import Mesh
from src.pointcloud.knn import PointCloud
from src.pointcloud.model import PcModelState, pc_model_forward
from src.training.flops import estimate_flops

PREDICTORS = ("model", "oracle", "zeros")
EVAL_EPS = 1e-8


@dataclass
class EvalReport:
    mean_rel_l2: float
    per_sample: List[float]
    wall_time: float
    param_count: int
    flops: int
    predictor: str = "model"
    extra: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)


def per_sample_errors(predictions: np.ndarray, targets: np.ndarray, eps: float = EVAL_EPS) -> np.ndarray:
    """‖û_i − u_i‖₂ / (‖u_i‖₂ + ε)，逐样本"""
    count = len(targets)
    predictions = np.asarray(predictions, dtype=np.float64).reshape(count, -1)
    targets = np.asarray(targets, dtype=np.float64).reshape(count, -1)
    return np.linalg.norm(predictions - targets, axis=1) / (np.linalg.norm(targets, axis=1) + eps)


def _check_predictor(predictor: str) -> None:
    if predictor not in PREDICTORS:
        error_msg = f"未知预测器: {predictor}，可选 {PREDICTORS}"
        logger.error(error_msg)
        raise ValueError(error_msg)


def predict_split(ms: ModelState, arrays: SplitArrays, batch_size: int = 8) -> np.ndarray:
    """
    推理模式下逐批前向，返回 (n, H, W) 预测

    Raises:
        ShapeError: 检查点的特征维度与数据不一致
    """
    if ms.config.feature_dim != arrays.feats.shape[-1]:
        error_msg = f"检查点特征维度 {ms.config.feature_dim} 与数据特征维度 {arrays.feats.shape[-1]} 不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    ms.set_training(False)
    count, height, width = arrays.target.shape
    outputs = []
    with no_grad():
        for start in range(0, count, batch_size):
            stop = min(start + batch_size, count)
            u_hat, _ = model_forward(ms, arrays.coords[start:stop], arrays.feats[start:stop])
            outputs.append(u_hat.numpy().reshape(stop - start, height, width))
    if not outputs:
        return np.zeros_like(arrays.target)
    return np.concatenate(outputs, axis=0)


def gradient_mse(predictions: np.ndarray, arrays: SplitArrays) -> float:
    """测试集上 ‖∇û − ∇u‖² 的有效节点平均，用于物理损失消融"""
    if len(arrays) == 0:
        return 0.0
    with no_grad():
        return loss_grad(predictions, arrays.target, Mesh(arrays.coords)).item()


def evaluate_model(
    ms: Optional[ModelState],
    arrays: SplitArrays,
    predictor: str = "model",
    batch_size: int = 8,
) -> EvalReport:
    """
    Args:
        ms: 模型；predictor 为 oracle/zeros 时只用于参数量与乘加估计，可为 None
        arrays: 评估划分
        predictor: model 为模型预测；oracle 直接返回真值；zeros 返回全零
        batch_size: 推理批大小

    Raises:
        ValueError: 未知预测器或 model 模式缺少模型
    """
    _check_predictor(predictor)
    if predictor == "model" and ms is None:
        error_msg = "model 预测器需要加载检查点"
        logger.error(error_msg)
        raise ValueError(error_msg)
    start = time.perf_counter()
    if predictor == "oracle":
        predictions = arrays.target.copy()
    elif predictor == "zeros":
        predictions = np.zeros_like(arrays.target)
    else:
        predictions = predict_split(ms, arrays, batch_size)
    errors = per_sample_errors(predictions, arrays.target)
    wall_time = time.perf_counter() - start

    height, width = arrays.target.shape[1:3]
    param_count = ms.parameter_count() if ms is not None else 0
    flops = estimate_flops(ms.config, height, width)["total"] if ms is not None else 0
    report = EvalReport(
        mean_rel_l2=float(np.mean(errors)) if len(errors) else 0.0,
        per_sample=[float(value) for value in errors],
        wall_time=wall_time,
        param_count=param_count,
        flops=flops,
        predictor=predictor,
        extra={"grad_mse": gradient_mse(predictions, arrays)},
    )
    logger.info(
        f"评估完成（{predictor}）: {len(errors)} 个样本，平均相对 L² {report.mean_rel_l2:.4e}，"
        f"耗时 {wall_time:.2f}s"
    )
    return report


def predict_clouds(ms: PcModelState, clouds: Sequence[Tuple[PointCloud, np.ndarray]]) -> List[np.ndarray]:
    with no_grad():
        return [pc_model_forward(ms, cloud)[0].numpy() for cloud, _ in clouds]


def evaluate_pc(
    ms: Optional[PcModelState],
    clouds: Sequence[Tuple[PointCloud, np.ndarray]],
    predictor: str = "model",
) -> EvalReport:
    """点云版评估，逐样本点数可以不同"""
    _check_predictor(predictor)
    if predictor == "model" and ms is None:
        error_msg = "model 预测器需要加载点云检查点"
        logger.error(error_msg)
        raise ValueError(error_msg)
    start = time.perf_counter()
    if predictor == "oracle":
        predictions = [target for _, target in clouds]
    elif predictor == "zeros":
        predictions = [np.zeros_like(target) for _, target in clouds]
    else:
        predictions = predict_clouds(ms, clouds)
    errors = [
        float(per_sample_errors(prediction[None], target[None])[0])
        for prediction, (_, target) in zip(predictions, clouds)
    ]
    report = EvalReport(
        mean_rel_l2=float(np.mean(errors)) if errors else 0.0,
        per_sample=errors,
        wall_time=time.perf_counter() - start,
        param_count=ms.parameter_count() if ms is not None else 0,
        flops=0,
        predictor=predictor,
    )
    logger.info(f"点云评估完成（{predictor}）: {len(errors)} 个样本，平均相对 L² {report.mean_rel_l2:.4e}")
    return report
