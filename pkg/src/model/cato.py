"""CATO 整体网络：坐标图 + 提升 + L 个 CATO 块 + 末端 LN + 标量/通量读出"""

import json
import os
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from src.attention.axial import AxialAttentionLayer, axial_forward
from src.autodiff import primitives as P
from src.autodiff.checkpoint import load_records, save_records
from src.autodiff.module import FeedForward, LayerNorm, Linear, Module
from src.autodiff.rng import make_rng
from src.autodiff.tensor import Tensor, as_tensor
from src.errors import CheckpointError, ShapeError
from src.geometry.chart import ChartCoords, ChartNet, NormalizedChart, chart_forward
from src.logging.logger_config import logger
from src.model.config import CatoConfig
from src.model.local import LocalStencil, local_forward
from src.physics.mesh import Mesh

BUFFER_PREFIX = "norm."
CoordsLike = Union[Mesh, np.ndarray, Tensor]


class CatoBlock(Module):
    """h̃ = h + A(LN(h), ζ) + L(LN(h))；h' = h̃ + MLP(LN(h̃))"""

    def __init__(self, rng: np.random.Generator, config: CatoConfig) -> None:
        self.norm1 = LayerNorm(config.channels, identity=config.core_mode)
        self.attn = AxialAttentionLayer(
            rng,
            config.channels,
            config.heads,
            theta=config.theta,
            position_scale=config.position_scale,
            dropout=config.dropout,
        )
        self.local: Optional[LocalStencil] = (
            LocalStencil(rng, config.channels, config.kernel_size) if config.local_enabled else None
        )
        self.norm2 = LayerNorm(config.channels, identity=config.core_mode)
        self.mlp = FeedForward(rng, config.channels, config.mlp_width, config.channels)


class ModelState(Module):
    """
    全部可学习参数与不可学习缓冲（输入/目标归一化统计量）

    参数名由属性路径组成，例如 ``blocks.0.attn.W_Q``、``readout_u.W``。
    """

    def __init__(self, config: CatoConfig, seed: int = 0) -> None:
        config.validate()
        self.config = config
        rng = make_rng(seed, stream=0)
        self.chart = ChartNet(rng, config.chart_hidden) if config.chart_mode == "learned" else NormalizedChart()
        self.lift = FeedForward(rng, 2 + config.feature_dim, config.lift_width, config.channels)
        layers = config.layers if config.variant == "cato" else 0
        self.blocks: List[CatoBlock] = [CatoBlock(rng, config) for _ in range(layers)]
        self.final_norm = LayerNorm(config.channels, identity=config.core_mode)
        self.readout_u = Linear(rng, config.channels, 1, zero_init=True)
        self.readout_q = Linear(rng, config.channels, 2, zero_init=True)
        self.buffers: Dict[str, np.ndarray] = {}
        self.assign_names()

    def set_training(self, training: bool) -> None:
        for block in self.blocks:
            block.attn.training = training

    def set_normalizer(self, stats: Dict[str, np.ndarray]) -> None:
        self.buffers = {f"{BUFFER_PREFIX}{key}": np.asarray(value, dtype=np.float64) for key, value in stats.items()}

    def normalizer(self, key: str) -> Optional[np.ndarray]:
        return self.buffers.get(f"{BUFFER_PREFIX}{key}")


def _batched_coords(coords: CoordsLike, batch: Optional[int]) -> Tensor:
    if isinstance(coords, Mesh):
        coords = coords.coords
    tensor = as_tensor(coords)
    if tensor.shape[-1] != 2 or tensor.ndim not in (3, 4):
        error_msg = f"坐标形状必须为 (H, W, 2) 或 (B, H, W, 2)，实际 {tensor.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    if tensor.ndim == 3:
        tensor = P.reshape(tensor, (1,) + tensor.shape)
        if batch and batch > 1:
            tensor = P.gather(tensor, np.zeros(batch, dtype=np.int64), axis=0)
    return tensor


def lift(ms: ModelState, coords: CoordsLike, feats: Optional[Union[np.ndarray, Tensor]] = None) -> Tensor:
    """
    Φ_pre([x, f]) = W2 σ(W1 z + b1) + b2

    Args:
        ms: 模型
        coords: 物理坐标
        feats: (B, H, W, d_f) 逐节点特征，d_f=0 时可省略

    Returns:
        (B, H, W, C)

    Raises:
        ShapeError: 特征维度与配置不一致
    """
    feature_dim = ms.config.feature_dim
    if feats is None:
        if feature_dim != 0:
            error_msg = f"模型需要 {feature_dim} 维输入特征，但未提供"
            logger.error(error_msg)
            raise ShapeError(error_msg)
        return ms.lift(_batched_coords(coords, None))
    feats = as_tensor(feats)
    if feats.shape[-1] != feature_dim:
        error_msg = f"输入特征维度 {feats.shape[-1]} 与配置 d_f={feature_dim} 不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    if feats.ndim == 3:
        feats = P.reshape(feats, (1,) + feats.shape)
    x = _batched_coords(coords, feats.shape[0])
    if x.shape[:3] != feats.shape[:3]:
        error_msg = f"坐标 {x.shape} 与特征 {feats.shape} 的批维/空间维不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    mean, std = ms.normalizer("feat_mean"), ms.normalizer("feat_std")
    if mean is not None and std is not None:
        feats = P.mul(P.sub(feats, as_tensor(mean)), as_tensor(1.0 / std))
    return ms.lift(P.concat([x, feats], axis=-1))


def block_forward(block: CatoBlock, h: Tensor, zeta: ChartCoords) -> Tensor:
    normed = block.norm1(h)
    update = axial_forward(block.attn, normed, zeta)
    if block.local is not None:
        update = P.add(update, local_forward(block.local, normed))
    h_tilde = P.add(h, update)
    return P.add(h_tilde, block.mlp(block.norm2(h_tilde)))


def model_forward(
    ms: ModelState,
    coords: CoordsLike,
    feats: Optional[Union[np.ndarray, Tensor]] = None,
) -> Tuple[Tensor, Tensor]:
    """
    完整前向：坐标图只计算一次，所有块共享

    Returns:
        (u_hat (B, N, 1), q_hat (B, N, 2))，N = H·W，按行主序展平
    """
    h = lift(ms, coords, feats)
    batch, height, width, channels = h.shape
    x = _batched_coords(coords, batch)
    zeta = chart_forward(ms.chart, x)
    for block in ms.blocks:
        h = block_forward(block, h, zeta)
    h = P.reshape(ms.final_norm(h), (batch, height * width, channels))
    u_hat = ms.readout_u(h)
    q_hat = ms.readout_q(h)
    mean, std = ms.normalizer("target_mean"), ms.normalizer("target_std")
    if mean is not None and std is not None:
        u_hat = P.add(P.scale(u_hat, float(np.ravel(std)[0])), as_tensor(mean))
        q_hat = P.scale(q_hat, float(np.ravel(std)[0]))
    return u_hat, q_hat


def chart_of(ms: ModelState, coords: CoordsLike) -> ChartCoords:
    return chart_forward(ms.chart, _batched_coords(coords, None))


def save_model(path: str, ms: ModelState) -> None:
    """写 CATO1 检查点，并在旁边写同名 .json 结构配置"""
    records = ms.state_dict()
    records.update(ms.buffers)
    save_records(path, records)
    with open(f"{path}.json", "w", encoding="utf-8") as handle:
        json.dump(ms.config.to_dict(), handle, ensure_ascii=False, indent=2)
    logger.info(f"模型检查点已保存: {path}（{ms.parameter_count()} 个参数）")


def load_model(path: str, config: Optional[CatoConfig] = None) -> ModelState:
    """
    读取检查点；config 缺省时从旁边的 .json 文件读取

    Raises:
        FileNotFoundError: 检查点或配置文件不存在
        CheckpointError: 参数缺失或形状不一致
    """
    if config is None:
        config_path = f"{path}.json"
        if not os.path.exists(config_path):
            raise FileNotFoundError(f"检查点配置文件不存在: {config_path}")
        with open(config_path, "r", encoding="utf-8") as handle:
            try:
                config = CatoConfig.from_dict(json.load(handle))
            except json.JSONDecodeError as e:
                raise CheckpointError(f"检查点配置文件解析失败: {e}") from e
    records = load_records(path)
    ms = ModelState(config)
    ms.load_state_dict(records)
    ms.buffers = {key: value for key, value in records.items() if key.startswith(BUFFER_PREFIX)}
    logger.info(f"已加载模型检查点: {path}")
    return ms
