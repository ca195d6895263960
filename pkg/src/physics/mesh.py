"""结构网格与网格一致的离散梯度"""

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from src.autodiff import primitives as P
from src.autodiff.tensor import Tensor, as_tensor
from src.errors import ShapeError
from src.logging.logger_config import logger

DET_TOLERANCE = 1e-12


@dataclass
class MeshGeometry:
    """
    逐节点 2×2 线性系统的预计算系数

    u_x = Δ_i u · ci_x + Δ_j u · cj_x，u_y = Δ_i u · ci_y + Δ_j u · cj_y，
    无效节点（边界或退化）的系数全部为 0。
    """

    ci_x: np.ndarray
    cj_x: np.ndarray
    ci_y: np.ndarray
    cj_y: np.ndarray
    mask: np.ndarray
    degenerate_count: int


@dataclass
class Mesh:
    """结构网格节点坐标，形状 (..., H, W, 2)，可带前导批维"""

    coords: np.ndarray
    _geometry: Optional[MeshGeometry] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim < 3 or self.coords.shape[-1] != 2:
            error_msg = f"网格坐标形状必须为 (..., H, W, 2)，实际 {self.coords.shape}"
            logger.error(error_msg)
            raise ShapeError(error_msg)
        if not np.all(np.isfinite(self.coords)):
            error_msg = "网格坐标含有非有限值"
            logger.error(error_msg)
            raise ValueError(error_msg)

    @property
    def height(self) -> int:
        return self.coords.shape[-3]

    @property
    def width(self) -> int:
        return self.coords.shape[-2]

    @property
    def spatial_shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def transposed(self) -> "Mesh":
        """交换 i、j 两个索引方向"""
        return Mesh(np.swapaxes(self.coords, -3, -2).copy())

    @property
    def geometry(self) -> MeshGeometry:
        if self._geometry is None:
            self._geometry = _build_geometry(self.coords)
        return self._geometry


def uniform_mesh(height: int, width: int, extent: Tuple[float, float] = (1.0, 1.0)) -> Mesh:
    """x 沿 i 方向、y 沿 j 方向的均匀网格"""
    x = np.linspace(0.0, extent[0], height)
    y = np.linspace(0.0, extent[1], width)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    return Mesh(np.stack([xx, yy], axis=-1))


def rotated_mesh(height: int, width: int, angle: float, spacing: float = 1.0) -> Mesh:
    """以角度 angle 旋转的均匀网格"""
    base = uniform_mesh(height, width, ((height - 1) * spacing, (width - 1) * spacing)).coords
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    return Mesh(base @ rotation.T)


def _neighbor_indices(length: int) -> Tuple[np.ndarray, np.ndarray]:
    index = np.arange(length)
    return np.minimum(index + 1, length - 1), np.maximum(index - 1, 0)


def _check_grid(height: int, width: int) -> None:
    if height < 3 or width < 3:
        error_msg = f"网格过小，中心差分至少需要 3×3，实际 {height}×{width}"
        logger.error(error_msg)
        raise ShapeError(error_msg)


def _build_geometry(coords: np.ndarray) -> MeshGeometry:
    height, width = coords.shape[-3], coords.shape[-2]
    _check_grid(height, width)
    ip, im = _neighbor_indices(height)
    jp, jm = _neighbor_indices(width)
    delta_i = np.take(coords, ip, axis=-3) - np.take(coords, im, axis=-3)
    delta_j = np.take(coords, jp, axis=-2) - np.take(coords, jm, axis=-2)
    a, b = delta_i[..., 0], delta_i[..., 1]
    c, d = delta_j[..., 0], delta_j[..., 1]
    det = a * d - b * c

    local_scale = np.max(np.abs(np.stack([a, b, c, d], axis=-1)), axis=-1)
    interior = np.zeros((height, width), dtype=bool)
    interior[1:-1, 1:-1] = True
    regular = np.abs(det) > DET_TOLERANCE * local_scale**2
    mask = np.broadcast_to(interior, det.shape) & regular

    safe_det = np.where(mask, det, 1.0)
    weight = np.where(mask, 1.0 / safe_det, 0.0)
    degenerate = int(np.sum(np.broadcast_to(interior, det.shape) & ~regular))
    if degenerate:
        logger.warning(f"网格中有 {degenerate} 个内部节点 |ad−bc| 过小，已屏蔽")
    return MeshGeometry(
        ci_x=d * weight,
        cj_x=-b * weight,
        ci_y=-c * weight,
        cj_y=a * weight,
        mask=mask,
        degenerate_count=degenerate,
    )


@dataclass
class GradField:
    """离散梯度 (u_x, u_y) 与有效节点掩码，无效节点处取值为 0"""

    ux: Tensor
    uy: Tensor
    mask: np.ndarray

    @property
    def valid_count(self) -> int:
        return int(np.sum(self.mask))


def centered_diffs(field_values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    内部节点上的索引空间中心差分

    Args:
        field_values: (..., H, W) 标量场

    Returns:
        (Δ_i, Δ_j)，形状 (..., H−2, W−2)

    Raises:
        ShapeError: 网格小于 3×3
    """
    values = np.asarray(field_values, dtype=np.float64)
    _check_grid(values.shape[-2], values.shape[-1])
    delta_i = values[..., 2:, 1:-1] - values[..., :-2, 1:-1]
    delta_j = values[..., 1:-1, 2:] - values[..., 1:-1, :-2]
    return delta_i, delta_j


def mesh_gradient(u: Union[Tensor, np.ndarray], mesh: Mesh) -> GradField:
    """
    网格一致梯度：对每个内部节点求解
    [Δ_i u, Δ_j u]ᵀ = [[a, b], [c, d]] · [u_x, u_y]ᵀ

    Args:
        u: (..., H, W) 标量场，可为带梯度的张量
        mesh: 与 u 空间形状一致的网格

    Returns:
        GradField，边界与退化节点被屏蔽
    """
    u = as_tensor(u)
    height, width = mesh.spatial_shape
    if u.shape[-2:] != (height, width):
        error_msg = f"标量场空间形状 {u.shape[-2:]} 与网格 {(height, width)} 不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    geometry = mesh.geometry
    ip, im = _neighbor_indices(height)
    jp, jm = _neighbor_indices(width)
    delta_i = P.sub(P.gather(u, ip, axis=-2), P.gather(u, im, axis=-2))
    delta_j = P.sub(P.gather(u, jp, axis=-1), P.gather(u, jm, axis=-1))
    ux = P.add(P.mul(delta_i, as_tensor(geometry.ci_x)), P.mul(delta_j, as_tensor(geometry.cj_x)))
    uy = P.add(P.mul(delta_i, as_tensor(geometry.ci_y)), P.mul(delta_j, as_tensor(geometry.cj_y)))
    mask = np.broadcast_to(geometry.mask, np.broadcast_shapes(u.shape, geometry.mask.shape))
    return GradField(ux=ux, uy=uy, mask=mask)
