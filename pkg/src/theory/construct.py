"""
显式构造单块核心 CATO，使其在固定网格上逼近给定的坐标图轴向低秩算子

通道布局：每个行秩 r 占 (P_r, U_r, M_r)，每个列秩 s 占 (Q_s, V_s, N_s)，
另有 Λ、Z 与输出通道 O。提升网络写入 P=a(ζ)、U=b(ζ)f、Q=c(ζ)、V=d(ζ)f、Λ=ℓ(ζ)、Z=f；
注意力的 Q/K 投影为零，权重均匀，值投影选出 U_r / V_s，输出投影写入 M_r / N_s；
块内前馈网络用 GELU 差分近似乘积，输出 Σ P_r M_r + Σ Q_s N_s + Λ Z 到 O。
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.autodiff.primitives import gelu_array, gelu_derivative
from src.autodiff.rng import make_rng
from src.autodiff.tensor import no_grad
from src.errors import FitError
from src.geometry.chart import ChartCoords
from src.logging.logger_config import logger
from src.model.cato import ModelState, model_forward
from src.model.config import CatoConfig
from src.physics.mesh import Mesh, uniform_mesh
from src.theory.operators import (
    AxialOperatorSpec,
    Coefficient,
    apply_T,
    chart_array,
    indicator_candidates,
    sample_sphere,
)

WIDTH_BUDGET = (32, 64, 128)
MAX_HEADS = 8
PRODUCT_STEP = 1e-4
LIFT_STEP = 1e-5
FEATURE_SCALE = 3.0
SAMPLE_COUNT = 256
EVAL_CHUNK = 64

_GELU_CURVATURE = math.sqrt(2.0 / math.pi)


@dataclass
class ChannelLayout:
    """通道编号表"""

    rank_xi: int
    rank_eta: int
    P: List[int] = field(default_factory=list)
    U: List[int] = field(default_factory=list)
    M: List[int] = field(default_factory=list)
    Q: List[int] = field(default_factory=list)
    V: List[int] = field(default_factory=list)
    N: List[int] = field(default_factory=list)
    Lam: int = 0
    Z: int = 0
    O: int = 0
    channels: int = 0
    heads: int = 1
    head_dim: int = 2

    @classmethod
    def build(cls, rank_xi: int, rank_eta: int) -> "ChannelLayout":
        layout = cls(rank_xi, rank_eta)
        index = 0
        for _ in range(rank_xi):
            layout.P.append(index)
            layout.U.append(index + 1)
            layout.M.append(index + 2)
            index += 3
        for _ in range(rank_eta):
            layout.Q.append(index)
            layout.V.append(index + 1)
            layout.N.append(index + 2)
            index += 3
        layout.Lam, layout.Z, layout.O = index, index + 1, index + 2
        used = index + 3
        layout.heads = max(rank_xi + rank_eta, 1)
        head_dim = math.ceil(used / layout.heads)
        layout.head_dim = head_dim + head_dim % 2
        layout.channels = layout.heads * layout.head_dim
        return layout

    @property
    def product_pairs(self) -> List[Tuple[int, int]]:
        pairs = list(zip(self.P, self.M)) + list(zip(self.Q, self.N))
        pairs.append((self.Lam, self.Z))
        return pairs

    @property
    def fitted_channels(self) -> int:
        return 2 * (self.rank_xi + self.rank_eta) + 2


@dataclass
class ChannelTarget:
    """提升网络的一个目标通道：值为 g(x_n)，product=True 时为 g(x_n)·f_n"""

    channel: int
    values: np.ndarray
    product: bool


def _channel_targets(spec: AxialOperatorSpec, layout: ChannelLayout, z: np.ndarray) -> List[ChannelTarget]:
    flat = z.reshape(-1, 2)

    def evaluate(coefficient: Coefficient) -> np.ndarray:
        return coefficient(flat)

    targets = []
    for r, (a, b) in enumerate(spec.row_terms):
        targets.append(ChannelTarget(layout.P[r], evaluate(a), product=False))
        targets.append(ChannelTarget(layout.U[r], evaluate(b), product=True))
    for s, (c, d) in enumerate(spec.col_terms):
        targets.append(ChannelTarget(layout.Q[s], evaluate(c), product=False))
        targets.append(ChannelTarget(layout.V[s], evaluate(d), product=True))
    targets.append(ChannelTarget(layout.Lam, evaluate(spec.diagonal), product=False))
    targets.append(ChannelTarget(layout.Z, np.ones(len(flat)), product=True))
    return targets


@dataclass
class LiftFit:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    worst_error: float


def _fit_lift(
    targets: Sequence[ChannelTarget],
    x: np.ndarray,
    layout: ChannelLayout,
    width: int,
    bound: float,
    rng: np.random.Generator,
) -> LiftFit:
    """
    随机 GELU 特征 + 最小二乘拟合通道表

    隐层分三段：只依赖 x 的 width 个单元，以及输入 f 权重为 ±LIFT_STEP 的两段，
    两段之差给出 gelu′(β_k(x))·f 的中心差分近似。
    """
    directions = rng.standard_normal((width, 2)) * FEATURE_SCALE
    offsets = rng.standard_normal(width)
    pre = x @ directions.T + offsets
    features = gelu_array(pre)
    slopes = gelu_derivative(pre)

    W1 = np.zeros((3, 3 * width))
    for block, f_weight in enumerate((0.0, LIFT_STEP, -LIFT_STEP)):
        W1[:2, block * width : (block + 1) * width] = directions.T
        W1[2, block * width : (block + 1) * width] = f_weight
    b1 = np.tile(offsets, 3)
    W2 = np.zeros((3 * width, layout.channels))
    b2 = np.zeros(layout.channels)

    design = np.concatenate([features, np.ones((len(x), 1))], axis=1)
    probes = np.linspace(-bound, bound, 5)
    worst = 0.0
    for target in targets:
        if target.product:
            weights, *_ = np.linalg.lstsq(slopes, target.values, rcond=None)
            W2[width : 2 * width, target.channel] = weights / (2.0 * LIFT_STEP)
            W2[2 * width :, target.channel] = -weights / (2.0 * LIFT_STEP)
            plus = gelu_array(pre[None, :, :] + LIFT_STEP * probes[:, None, None])
            minus = gelu_array(pre[None, :, :] - LIFT_STEP * probes[:, None, None])
            realized = (plus - minus) @ weights / (2.0 * LIFT_STEP)
            error = np.max(np.abs(realized - probes[:, None] * target.values[None, :]))
        else:
            solution, *_ = np.linalg.lstsq(design, target.values, rcond=None)
            W2[:width, target.channel] = solution[:-1]
            b2[target.channel] = solution[-1]
            error = np.max(np.abs(design @ solution - target.values))
        worst = max(worst, float(error))
    return LiftFit(W1, b1, W2, b2, worst)


def _product_mlp(layout: ChannelLayout) -> Tuple[np.ndarray, np.ndarray]:
    """p·u = (q(p+u) − q(p−u)) / (4 c h²)，q(y) = gelu(hy) + gelu(−hy)，c = √(2/π)"""
    pairs = layout.product_pairs
    h = PRODUCT_STEP
    W1 = np.zeros((layout.channels, 4 * len(pairs)))
    W2 = np.zeros((4 * len(pairs), layout.channels))
    out_weight = 1.0 / (4.0 * _GELU_CURVATURE * h * h)
    for k, (first, second) in enumerate(pairs):
        columns = range(4 * k, 4 * k + 4)
        signs = ((h, h), (-h, -h), (h, -h), (-h, h))
        for column, (w_first, w_second) in zip(columns, signs):
            W1[first, column] = w_first
            W1[second, column] = w_second
        W2[4 * k, layout.O] = out_weight
        W2[4 * k + 1, layout.O] = out_weight
        W2[4 * k + 2, layout.O] = -out_weight
        W2[4 * k + 3, layout.O] = -out_weight
    return W1, W2


def _assemble(layout: ChannelLayout, lift_fit: LiftFit, width: int) -> ModelState:
    config = CatoConfig(
        layers=1,
        channels=layout.channels,
        heads=layout.heads,
        chart_hidden=2,
        feature_dim=1,
        core_mode=True,
        lift_hidden=3 * width,
        mlp_hidden=4 * len(layout.product_pairs),
    )
    ms = ModelState(config)
    for param in ms.chart.parameters():
        param.data = np.zeros_like(param.data)

    ms.lift.fc1.W.data = lift_fit.W1
    ms.lift.fc1.b.data = lift_fit.b1
    ms.lift.fc2.W.data = lift_fit.W2
    ms.lift.fc2.b.data = lift_fit.b2

    attn = ms.blocks[0].attn
    dh = layout.head_dim
    for name in ("W_Q", "W_K", "W_V", "W_O_row", "W_O_col"):
        getattr(attn, name).data = np.zeros((layout.channels, layout.channels))
    for r in range(layout.rank_xi):
        attn.W_V.data[layout.U[r], r * dh] = 1.0
        attn.W_O_row.data[r * dh, layout.M[r]] = 1.0
    for s in range(layout.rank_eta):
        head = layout.rank_xi + s
        attn.W_V.data[layout.V[s], head * dh] = 1.0
        attn.W_O_col.data[head * dh, layout.N[s]] = 1.0

    mlp = ms.blocks[0].mlp
    mlp.fc1.W.data, mlp.fc2.W.data = _product_mlp(layout)
    mlp.fc1.b.data = np.zeros_like(mlp.fc1.b.data)
    mlp.fc2.b.data = np.zeros_like(mlp.fc2.b.data)

    ms.readout_u.W.data = np.zeros((layout.channels, 1))
    ms.readout_u.W.data[layout.O, 0] = 1.0
    return ms


def network_apply(ms: ModelState, mesh: Mesh, fields: np.ndarray) -> np.ndarray:
    """
    批量计算 N_Θ(f, X)

    Args:
        fields: (S, H, W) 输入场

    Returns:
        (S, H, W) 网络输出 û
    """
    height, width = mesh.spatial_shape
    outputs = []
    with no_grad():
        for start in range(0, len(fields), EVAL_CHUNK):
            chunk = fields[start : start + EVAL_CHUNK]
            u_hat, _ = model_forward(ms, mesh, chunk[..., None])
            outputs.append(u_hat.numpy().reshape(len(chunk), height, width))
    return np.concatenate(outputs, axis=0)


def sup_error(
    ms: ModelState,
    mesh: Mesh,
    target: Callable[[np.ndarray], np.ndarray],
    radius: float,
    rng: np.random.Generator,
    samples: int = SAMPLE_COUNT,
) -> Tuple[float, int]:
    """
    在 B_M 上以蒙特卡洛方式估计 sup‖N_Θ(f) − G f‖₂，结果是真实上确界的下估计

    候选集为球面上的 samples 个随机场，加上每个节点的 ±M·e_n。

    Args:
        target: 把 (S, H, W) 输入场映射到期望输出的函数 G

    Returns:
        (最大误差, 样本数)
    """
    shape = mesh.spatial_shape
    fields = np.concatenate([sample_sphere(rng, samples, shape, radius), indicator_candidates(shape, radius)], axis=0)
    predicted = network_apply(ms, mesh, fields)
    errors = np.linalg.norm((predicted - target(fields)).reshape(len(fields), -1), axis=1)
    return float(np.max(errors)), len(fields)


def construct_lemma1_network(
    spec: AxialOperatorSpec,
    zeta: Union[ChartCoords, np.ndarray],
    M_bound: float,
    eps_nn: float,
    mesh: Optional[Mesh] = None,
    seed: int = 0,
    max_heads: int = MAX_HEADS,
    widths: Sequence[int] = WIDTH_BUDGET,
) -> ModelState:
    """
    按宽度预算依次尝试拟合通道表，返回第一个通过抽样验证的网络

    Args:
        spec: 目标算子
        zeta: 网格上的坐标图 (H, W, 2)
        M_bound: 输入球半径 M
        eps_nn: 允许的逼近误差
        mesh: 物理网格，缺省为与坐标图同形的均匀网格
        seed: 随机特征与抽样验证的种子
        max_heads: 头数预算

    Raises:
        ValueError: R_ξ + R_η 超出头数预算
        FitError: 所有宽度都达不到容差
    """
    z = chart_array(zeta)
    height, width = z.shape[:2]
    if spec.rank_xi + spec.rank_eta > max_heads:
        error_msg = f"R_ξ + R_η = {spec.rank_xi + spec.rank_eta} 超出头数预算 {max_heads}"
        logger.error(error_msg)
        raise ValueError(error_msg)
    if mesh is None:
        mesh = uniform_mesh(height, width)
    layout = ChannelLayout.build(spec.rank_xi, spec.rank_eta)
    targets = _channel_targets(spec, layout, z)
    x = mesh.coords.reshape(-1, 2)
    tolerance = eps_nn / (2.0 * math.sqrt(height * width) * layout.fitted_channels)

    attempts: Dict[int, str] = {}
    for lift_width in widths:
        rng = make_rng(seed, stream=lift_width)
        lift_fit = _fit_lift(targets, x, layout, lift_width, M_bound, rng)
        if lift_fit.worst_error > tolerance:
            attempts[lift_width] = f"通道误差 {lift_fit.worst_error:.3e} > τ={tolerance:.3e}"
            logger.debug(f"宽度 {lift_width} 拟合未达标: {attempts[lift_width]}")
            continue
        ms = _assemble(layout, lift_fit, lift_width)
        measured, count = sup_error(ms, mesh, lambda f: apply_T(spec, z, f), M_bound, make_rng(seed, stream=1))
        if measured > eps_nn:
            attempts[lift_width] = f"抽样误差 {measured:.3e} > ε_nn={eps_nn:.3e}"
            logger.debug(f"宽度 {lift_width} 验证未通过: {attempts[lift_width]}")
            continue
        logger.info(
            f"单块网络构造成功: 宽度 {lift_width}, C={layout.channels}, M={layout.heads}, "
            f"{count} 个样本上最大误差 {measured:.3e}"
        )
        return ms

    error_msg = f"通道表拟合在宽度预算 {tuple(widths)} 内失败: {attempts}"
    logger.error(error_msg)
    raise FitError(error_msg)
