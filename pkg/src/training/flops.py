"""乘加次数：按形状解析估计，以及用 FlopCounter 实测"""

from typing import Dict, Optional, Sequence

import numpy as np

from src.autodiff.tensor import FlopCounter, no_grad
from src.model.cato import ModelState, model_forward
from src.model.config import CatoConfig
from src.physics.mesh import uniform_mesh

ATTENTION_SCOPE = "attention/matmul"


def estimate_flops(config: CatoConfig, height: int, width: int, batch: int = 1) -> Dict[str, int]:
    """
    统计矩阵乘、注意力打分/加权和与卷积的乘加次数，与原语实测口径一致

    Returns:
        各部分乘加次数及 total；attention_scores 只含打分与加权和
    """
    nodes = batch * height * width
    channels = config.channels
    layers = config.layers if config.variant == "cato" else 0
    parts: Dict[str, int] = {}
    parts["chart"] = nodes * 4 * config.chart_hidden if config.chart_mode == "learned" else 0
    parts["lift"] = nodes * ((2 + config.feature_dim) * config.lift_width + config.lift_width * channels)
    # 行、列两个分支各有 Q/K/V 与输出投影
    parts["attention_projections"] = layers * nodes * 8 * channels * channels
    row = batch * config.heads * height * width * width * config.head_dim
    col = batch * config.heads * width * height * height * config.head_dim
    parts["attention_scores"] = layers * 2 * (row + col)
    if config.local_enabled:
        parts["local"] = layers * nodes * channels * (config.kernel_size**2 + channels)
    else:
        parts["local"] = 0
    parts["mlp"] = layers * 2 * nodes * channels * config.mlp_width
    parts["readout"] = nodes * channels * 3
    parts["total"] = sum(parts.values())
    return parts


def measure_flops(ms: ModelState, height: int, width: int, batch: int = 1) -> Dict[str, int]:
    """在均匀网格上跑一次前向，返回 FlopCounter 记录的总乘加次数与注意力打分部分"""
    mesh = uniform_mesh(height, width)
    feature_dim = ms.config.feature_dim
    feats = np.ones((batch, height, width, feature_dim)) if feature_dim else None
    coords = np.broadcast_to(mesh.coords, (batch, height, width, 2)).copy()
    with no_grad(), FlopCounter() as counter:
        model_forward(ms, coords, feats)
    return {"total": counter.total, "attention_scores": counter.by_op.get(ATTENTION_SCOPE, 0)}


def fit_scaling_exponent(sizes: Sequence[int], counts: Sequence[float]) -> float:
    """log(count) 对 log(边长) 的最小二乘斜率"""
    log_sizes = np.log(np.asarray(sizes, dtype=np.float64))
    log_counts = np.log(np.asarray(counts, dtype=np.float64))
    slope, _ = np.polyfit(log_sizes, log_counts, 1)
    return float(slope)


def attention_scaling(
    config: CatoConfig,
    sizes: Sequence[int] = (16, 32, 64),
    model: Optional[ModelState] = None,
) -> Dict:
    """
    注意力打分随边长的增长指数；给出 model 时同时对前向实测

    正方形网格上 O(HW(H+W)) 的斜率为 3，稠密注意力 O((HW)²) 为 4。
    """
    estimated = [estimate_flops(config, n, n)["attention_scores"] for n in sizes]
    result = {
        "sizes": list(sizes),
        "estimated": estimated,
        "estimated_slope": fit_scaling_exponent(sizes, estimated),
    }
    if model is not None:
        measured = [measure_flops(model, n, n)["attention_scores"] for n in sizes]
        result["measured"] = measured
        result["measured_slope"] = fit_scaling_exponent(sizes, measured)
    return result
