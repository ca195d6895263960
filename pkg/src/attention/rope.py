"""连续旋转位置编码：以实值坐标图作为位置旋转 query/key 的通道对"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from src.autodiff import primitives as P
from src.autodiff.tensor import Tensor, as_tensor
from src.errors import ShapeError
from src.logging.logger_config import logger


@dataclass(frozen=True)
class RopeConfig:
    """
    Args:
        head_dim: 每个头的维度，必须为正偶数
        theta: 频率底数
        scale: 坐标图值在旋转前乘上的位置缩放
    """

    head_dim: int
    theta: float = 10000.0
    scale: float = math.pi

    def __post_init__(self) -> None:
        if self.head_dim <= 0 or self.head_dim % 2 != 0:
            error_msg = f"RoPE 头维度必须为正偶数，实际 {self.head_dim}"
            logger.error(error_msg)
            raise ValueError(error_msg)
        if self.theta <= 0:
            error_msg = f"RoPE 底数必须为正，实际 {self.theta}"
            logger.error(error_msg)
            raise ValueError(error_msg)


def frequencies(config: RopeConfig) -> np.ndarray:
    """ω_r = θ^(−2r/d_h)，r = 0..d_h/2−1"""
    r = np.arange(config.head_dim // 2, dtype=np.float64)
    return config.theta ** (-2.0 * r / config.head_dim)


def _pair_frequencies(config: RopeConfig) -> np.ndarray:
    return np.repeat(frequencies(config), 2)


def _pair_sign(head_dim: int) -> np.ndarray:
    return np.tile(np.array([-1.0, 1.0]), head_dim // 2)


def _pair_swap(head_dim: int) -> np.ndarray:
    return np.arange(head_dim).reshape(-1, 2)[:, ::-1].reshape(-1)


def rope_apply(v: np.ndarray, p: Union[float, np.ndarray], theta: float = 10000.0) -> np.ndarray:
    """
    把 v 的每个通道对 (2r, 2r+1) 旋转 ω_r·p

    Args:
        v: (..., d_h) 头向量
        p: 标量位置或与 v.shape[:-1] 可广播的位置数组
        theta: 频率底数

    Returns:
        旋转后的向量，范数不变

    Raises:
        ShapeError: 向量长度为奇数
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] % 2 != 0:
        error_msg = f"RoPE 需要偶数长度的向量，实际 {v.shape[-1]}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    config = RopeConfig(head_dim=v.shape[-1], theta=theta)
    angles = np.asarray(p, dtype=np.float64)[..., None] * _pair_frequencies(config)
    swapped = v[..., _pair_swap(config.head_dim)] * _pair_sign(config.head_dim)
    return v * np.cos(angles) + swapped * np.sin(angles)


def rope_score(q: np.ndarray, k: np.ndarray, p_q: float, p_k: float, theta: float = 10000.0) -> float:
    """⟨R(p_q) q, R(p_k) k⟩，只依赖相对位置 p_k − p_q"""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != k.shape:
        error_msg = f"query 与 key 维度不一致: {q.shape} vs {k.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    return float(np.dot(rope_apply(q, p_q, theta), rope_apply(k, p_k, theta)))


def rope_rotate(v: Tensor, positions: Tensor, config: RopeConfig) -> Tensor:
    """
    张量版本的旋转，梯度同时流向 v 与位置（即坐标图）

    Args:
        v: (..., d_h)
        positions: 与 v.shape[:-1] 可广播的位置，已包含缩放
    """
    if v.shape[-1] != config.head_dim:
        error_msg = f"头维度 {v.shape[-1]} 与 RoPE 配置 {config.head_dim} 不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    positions = as_tensor(positions)
    expanded = P.reshape(positions, positions.shape + (1,))
    angles = P.mul(expanded, as_tensor(_pair_frequencies(config)))
    swapped = P.mul(P.gather(v, _pair_swap(config.head_dim), axis=-1), as_tensor(_pair_sign(config.head_dim)))
    return P.add(P.mul(v, P.cos(angles)), P.mul(swapped, P.sin(angles)))
