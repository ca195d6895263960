"""物理约束训练目标 L = L_val + λ_g L_grad + λ_f L_flux + λ_c L_cons (+ λ_gdl L_gdl)"""

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from src.autodiff import primitives as P
from src.autodiff.tensor import Tensor, as_tensor
from src.errors import ShapeError
from src.logging.logger_config import logger
from src.physics.mesh import Mesh, mesh_gradient

ArrayLike = Union[Tensor, np.ndarray]


@dataclass
class LossWeights:
    """
    Args:
        lambda_g: 梯度匹配项权重
        lambda_f: 通量监督项权重
        lambda_c: 标量/通量一致性项权重
        eps: 相对误差分母中的稳定项
        lambda_gdl: 索引空间梯度差项权重（缺省关闭）
    """

    lambda_g: float = 0.0
    lambda_f: float = 0.0
    lambda_c: float = 0.0
    eps: float = 1e-8
    lambda_gdl: float = 0.0

    def validate(self) -> None:
        weights = {
            "lambda_g": self.lambda_g,
            "lambda_f": self.lambda_f,
            "lambda_c": self.lambda_c,
            "lambda_gdl": self.lambda_gdl,
        }
        negative = [name for name, value in weights.items() if value < 0]
        if negative or self.eps <= 0:
            error_msg = f"损失权重必须非负且 eps > 0: {asdict(self)}"
            logger.error(error_msg)
            raise ValueError(error_msg)


LOSS_PRESETS: Dict[str, LossWeights] = {
    "darcy": LossWeights(lambda_g=0.2, lambda_f=0.2, lambda_c=0.05),
    "airfoil": LossWeights(lambda_g=0.2, lambda_f=0.2, lambda_c=0.05),
    "pipe": LossWeights(lambda_g=0.2, lambda_f=0.2, lambda_c=0.05),
    "navier-stokes": LossWeights(),
    "elasticity": LossWeights(),
    "plasticity": LossWeights(),
    "zero": LossWeights(),
}


@dataclass
class LossReport:
    total: float
    val: float
    grad: float
    flux: float
    cons: float
    gdl: float
    valid_count: int
    masked_fraction: float
    tensor: Optional[Tensor] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> Dict:
        return {
            "total": self.total,
            "val": self.val,
            "grad": self.grad,
            "flux": self.flux,
            "cons": self.cons,
            "gdl": self.gdl,
            "valid_count": self.valid_count,
            "masked_fraction": self.masked_fraction,
        }


def _scalar_field(values: ArrayLike, mesh: Mesh) -> Tensor:
    """(B, N, 1) / (B, N) / (B, H, W) → (B, H, W)"""
    tensor = as_tensor(values)
    height, width = mesh.spatial_shape
    if tensor.ndim == 3 and tensor.shape[1:] == (height * width, 1):
        tensor = P.reshape(tensor, (tensor.shape[0], height, width))
    elif tensor.ndim == 2 and tensor.shape[1] == height * width:
        tensor = P.reshape(tensor, (tensor.shape[0], height, width))
    if tensor.ndim != 3 or tensor.shape[1:] != (height, width):
        error_msg = f"标量场形状 {tensor.shape} 与网格 {(height, width)} 不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    return tensor


def _flux_field(values: ArrayLike, mesh: Mesh) -> Tuple[Tensor, Tensor]:
    """(B, N, 2) 或 (B, H, W, 2) → (q_x, q_y)，各为 (B, H, W)"""
    tensor = as_tensor(values)
    height, width = mesh.spatial_shape
    if tensor.ndim == 3 and tensor.shape[1] == height * width:
        tensor = P.reshape(tensor, (tensor.shape[0], height, width, 2))
    if tensor.ndim != 4 or tensor.shape[1:] != (height, width, 2):
        error_msg = f"通量场形状 {tensor.shape} 与网格 {(height, width)} 不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    return P.gather(tensor, np.array(0), axis=-1), P.gather(tensor, np.array(1), axis=-1)


def _masked_mse(dx: Tensor, dy: Tensor, mask: np.ndarray) -> Tensor:
    """有效节点上 |d|² 的平均，分母为 B·N_valid"""
    weight = np.broadcast_to(mask, dx.shape).astype(np.float64)
    count = float(weight.sum())
    if count == 0.0:
        logger.warning("网格没有有效节点，梯度类损失记为 0")
        return P.scale(P.reduce_sum(dx), 0.0)
    squared = P.add(P.square(dx), P.square(dy))
    return P.scale(P.reduce_sum(P.mul(squared, as_tensor(weight))), 1.0 / count)


def _relative_l2(diff: Tensor, reference: np.ndarray, eps: float) -> Tensor:
    batch = diff.shape[0]
    axes = tuple(range(1, diff.ndim))
    numerator = P.sqrt(P.reduce_sum(P.square(diff), axis=axes))
    denominator = np.sqrt(np.sum(reference * reference, axis=axes)) + eps
    return P.scale(P.reduce_sum(P.mul(numerator, as_tensor(1.0 / denominator))), 1.0 / batch)


def loss_val(u_hat: ArrayLike, u: ArrayLike, eps: float = 1e-8) -> Tensor:
    """
    批平均相对 L²：mean_b ‖û_b − u_b‖₂ / (‖u_b‖₂ + ε)

    Raises:
        ShapeError: 形状不一致或批为空
    """
    u_hat, u = as_tensor(u_hat), as_tensor(u)
    if u_hat.shape != u.shape or u.ndim < 1 or u.shape[0] < 1:
        error_msg = f"预测与目标形状不一致: {u_hat.shape} vs {u.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    if u.ndim == 1:
        u_hat = P.reshape(u_hat, (u.shape[0], 1))
        u = as_tensor(u.data.reshape(u.shape[0], 1))
    return _relative_l2(P.sub(u_hat, u), u.data, eps)


def loss_grad(u_hat: ArrayLike, u: ArrayLike, mesh: Mesh) -> Tensor:
    """有效节点上 ‖∇û − ∇u‖² 的平均"""
    predicted = mesh_gradient(_scalar_field(u_hat, mesh), mesh)
    target = mesh_gradient(_scalar_field(u, mesh), mesh)
    return _masked_mse(P.sub(predicted.ux, target.ux), P.sub(predicted.uy, target.uy), predicted.mask)


def loss_flux(q_hat: ArrayLike, u: ArrayLike, mesh: Mesh) -> Tensor:
    """有效节点上 ‖q̂ − ∇u‖² 的平均"""
    qx, qy = _flux_field(q_hat, mesh)
    target = mesh_gradient(_scalar_field(u, mesh), mesh)
    return _masked_mse(P.sub(qx, target.ux), P.sub(qy, target.uy), target.mask)


def loss_cons(q_hat: ArrayLike, u_hat: ArrayLike, mesh: Mesh) -> Tensor:
    """有效节点上 ‖q̂ − ∇û‖² 的平均，与真值无关"""
    qx, qy = _flux_field(q_hat, mesh)
    predicted = mesh_gradient(_scalar_field(u_hat, mesh), mesh)
    return _masked_mse(P.sub(qx, predicted.ux), P.sub(qy, predicted.uy), predicted.mask)


def loss_gdl(u_hat: ArrayLike, u: ArrayLike, mesh: Mesh, eps: float = 1e-8) -> Tensor:
    """索引空间中心差分的相对 L² 误差（内部节点）"""
    predicted = _scalar_field(u_hat, mesh)
    target = _scalar_field(u, mesh).data
    height, width = mesh.spatial_shape
    diff = P.sub(predicted, as_tensor(target))
    rows, cols = np.arange(1, height - 1), np.arange(1, width - 1)
    di = P.sub(P.gather(diff, rows + 1, axis=1), P.gather(diff, rows - 1, axis=1))
    dj = P.sub(P.gather(diff, cols + 1, axis=2), P.gather(diff, cols - 1, axis=2))
    di = P.gather(di, cols, axis=2)
    dj = P.gather(dj, rows, axis=1)
    ref_i = target[:, 2:, 1:-1] - target[:, :-2, 1:-1]
    ref_j = target[:, 1:-1, 2:] - target[:, 1:-1, :-2]
    stacked = P.concat([di, dj], axis=-1)
    return _relative_l2(stacked, np.concatenate([ref_i, ref_j], axis=-1), eps)


def total_loss(
    preds: Tuple[ArrayLike, ArrayLike],
    targets: ArrayLike,
    mesh: Mesh,
    weights: LossWeights,
) -> LossReport:
    """
    计算完整目标并返回分项报告，report.tensor 为可反向传播的总损失

    Args:
        preds: (û (B, N, 1), q̂ (B, N, 2))
        targets: 真值 u，(B, N, 1) 或 (B, H, W)
        mesh: 网格，可为共享 (H, W, 2) 或逐样本 (B, H, W, 2)
        weights: 各项权重
    """
    weights.validate()
    u_hat, q_hat = preds
    u_field = _scalar_field(targets, mesh)
    u_hat_field = _scalar_field(u_hat, mesh)

    val = loss_val(u_hat_field, u_field, weights.eps)
    grad = loss_grad(u_hat_field, u_field, mesh)
    flux = loss_flux(q_hat, u_field, mesh)
    cons = loss_cons(q_hat, u_hat_field, mesh)
    gdl = loss_gdl(u_hat_field, u_field, mesh, weights.eps)

    total = P.add(
        P.add(P.add(val, P.scale(grad, weights.lambda_g)), P.add(P.scale(flux, weights.lambda_f), P.scale(cons, weights.lambda_c))),
        P.scale(gdl, weights.lambda_gdl),
    )
    values = {name: term.item() for name, term in (("val", val), ("grad", grad), ("flux", flux), ("cons", cons), ("gdl", gdl))}
    mask = np.broadcast_to(mesh.geometry.mask, u_field.shape)
    valid = int(mask.sum())
    return LossReport(
        total=values["val"]
        + weights.lambda_g * values["grad"]
        + weights.lambda_f * values["flux"]
        + weights.lambda_c * values["cons"]
        + weights.lambda_gdl * values["gdl"],
        val=values["val"],
        grad=values["grad"],
        flux=values["flux"],
        cons=values["cons"],
        gdl=values["gdl"],
        valid_count=valid,
        masked_fraction=1.0 - valid / mask.size,
        tensor=total,
    )


def relative_l2_error(u_hat: np.ndarray, u: np.ndarray, eps: float = 1e-8) -> float:
    """评估指标：逐样本相对 L² 的批平均（不求导）"""
    u_hat = np.asarray(u_hat, dtype=np.float64).reshape(len(u), -1)
    u = np.asarray(u, dtype=np.float64).reshape(len(u), -1)
    return float(np.mean(np.linalg.norm(u_hat - u, axis=1) / (np.linalg.norm(u, axis=1) + eps)))
