"""学习型几何坐标图 Φ_chart: x ↦ ζ = (ξ, η) ∈ [−1,1]²"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from src.autodiff import primitives as P
from src.autodiff.module import Linear, Module
from src.autodiff.tensor import Tensor, as_tensor
from src.errors import ShapeError
from src.logging.logger_config import logger
from src.physics.mesh import Mesh

# sup_x |d/dx SiLU(x)|，在 x ≈ 2.3994 处取得
SILU_DERIVATIVE_SUP = 1.0998393194

CoordsLike = Union[Mesh, np.ndarray, Tensor]


@dataclass
class ChartCoords:
    """逐节点坐标图值，values 形状 (..., 2)，最后一维为 (ξ, η)"""

    values: Tensor

    @property
    def xi(self) -> Tensor:
        return P.gather(self.values, np.array(0), axis=-1)

    @property
    def eta(self) -> Tensor:
        return P.gather(self.values, np.array(1), axis=-1)

    def numpy(self) -> np.ndarray:
        return self.values.data

    @classmethod
    def from_array(cls, values: np.ndarray) -> "ChartCoords":
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != 2:
            raise ShapeError(f"坐标图最后一维必须为 2，实际 {values.shape}")
        return cls(as_tensor(values))


def _coords_tensor(coords: CoordsLike) -> Tensor:
    if isinstance(coords, Mesh):
        coords = coords.coords
    tensor = as_tensor(coords)
    if tensor.shape[-1] != 2:
        error_msg = f"坐标必须是二维的 (..., 2)，实际形状 {tensor.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    return tensor


class ChartNet(Module):
    """Φ_chart(x) = tanh(V2 · SiLU(V1 x + c1) + c2)"""

    def __init__(self, rng: np.random.Generator, hidden: int = 64) -> None:
        self.hidden = hidden
        self.V1 = Linear(rng, 2, hidden)
        self.V2 = Linear(rng, hidden, 2)

    def __call__(self, coords: CoordsLike) -> ChartCoords:
        x = _coords_tensor(coords)
        return ChartCoords(P.tanh(self.V2(P.silu(self.V1(x)))))

    def lipschitz_bound(self) -> float:
        """‖V2‖₂ · ‖V1‖₂ · sup|SiLU′|（tanh′ ≤ 1）"""
        norm1 = float(np.linalg.norm(self.V1.W.data, ord=2))
        norm2 = float(np.linalg.norm(self.V2.W.data, ord=2))
        return norm1 * norm2 * SILU_DERIVATIVE_SUP


class NormalizedChart(Module):
    """
    坐标归一化对照：按样本把坐标仿射映射到 [−1,1]²，无可学习参数

    用于与学习型坐标图做消融比较。
    """

    def __call__(self, coords: CoordsLike) -> ChartCoords:
        x = _coords_tensor(coords).data
        spatial_axes = tuple(range(x.ndim - 3, x.ndim - 1)) if x.ndim >= 3 else (0,)
        low = np.min(x, axis=spatial_axes, keepdims=True)
        high = np.max(x, axis=spatial_axes, keepdims=True)
        span = np.where(high - low > 0.0, high - low, 1.0)
        return ChartCoords(as_tensor(2.0 * (x - low) / span - 1.0))


def chart_forward(net: Module, coords: CoordsLike) -> ChartCoords:
    return net(coords)


def chart_perturb(
    z: ChartCoords,
    delta: float,
    rng: Optional[np.random.Generator] = None,
    direction: Optional[np.ndarray] = None,
) -> ChartCoords:
    """
    逐节点扰动坐标图，扰动范数 ≤ delta，结果截断回 [−1,1]²

    Args:
        z: 原坐标图
        delta: 扰动半径
        rng: 随机方向来源（direction 未给出时使用）
        direction: 固定的逐节点单位方向 (..., 2)

    Raises:
        ValueError: delta 为负
    """
    if delta < 0:
        error_msg = f"扰动半径不能为负: {delta}"
        logger.error(error_msg)
        raise ValueError(error_msg)
    values = z.numpy()
    if delta == 0:
        return ChartCoords.from_array(values.copy())
    if direction is None:
        if rng is None:
            raise ValueError("未提供扰动方向时必须给出随机数发生器")
        direction = rng.standard_normal(values.shape)
    norms = np.linalg.norm(direction, axis=-1, keepdims=True)
    unit = direction / np.where(norms > 0.0, norms, 1.0)
    perturbed = np.clip(values + delta * unit, -1.0, 1.0)
    return ChartCoords.from_array(perturbed)
