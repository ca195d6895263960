"""
CATO-PC：保留可学习坐标图，用带坐标图距离偏置的稠密全局注意力
和 K 近邻局部消息传递（软注意力 + 最大值聚合）替代轴向注意力
"""

import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.autodiff import primitives as P
from src.autodiff.checkpoint import load_records, save_records
from src.autodiff.module import FeedForward, LayerNorm, Linear, Module, scaled_gaussian
from src.autodiff.rng import make_rng
from src.autodiff.tensor import Parameter, Tensor, as_tensor
from src.errors import CheckpointError, ShapeError
from src.geometry.chart import ChartCoords, ChartNet, chart_forward
from src.logging.logger_config import logger
from src.model.cato import BUFFER_PREFIX
from src.pointcloud.knn import KnnGraph, PointCloud, build_knn

EDGE_FEATURES = 5


@dataclass
class PcConfig:
    layers: int = 2
    channels: int = 32
    heads: int = 4
    k: int = 16
    mlp_ratio: int = 4
    chart_hidden: int = 64
    feature_dim: int = 1
    gate_init: float = 0.1
    with_flux: bool = False

    def validate(self) -> None:
        problems = []
        if self.channels <= 0 or self.heads <= 0 or self.channels % self.heads != 0:
            problems.append(f"channels={self.channels} 必须能被 heads={self.heads} 整除")
        if self.layers < 1:
            problems.append(f"layers 至少为 1，实际 {self.layers}")
        if self.k < 1:
            problems.append(f"k 至少为 1，实际 {self.k}")
        if self.feature_dim < 0:
            problems.append(f"feature_dim 不能为负，实际 {self.feature_dim}")
        if problems:
            error_msg = "点云模型配置非法: " + "; ".join(problems)
            logger.error(error_msg)
            raise ValueError(error_msg)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "PcConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            error_msg = f"点云模型配置包含未知字段: {sorted(unknown)}"
            logger.error(error_msg)
            raise ValueError(error_msg)
        return cls(**data)


class PcGlobalAttention(Module):
    """稠密多头注意力，logit 加偏置 −β_m‖ζ_i − ζ_j‖²"""

    def __init__(self, rng: np.random.Generator, channels: int, heads: int) -> None:
        self.channels = channels
        self.heads = heads
        self.head_dim = channels // heads
        self.W_Q = Parameter(scaled_gaussian(rng, channels, (channels, channels)))
        self.W_K = Parameter(scaled_gaussian(rng, channels, (channels, channels)))
        self.W_V = Parameter(scaled_gaussian(rng, channels, (channels, channels)))
        self.W_O = Parameter(scaled_gaussian(rng, channels, (channels, channels)))
        self.beta = Parameter(np.ones(heads))

    def _split(self, x: Tensor) -> Tensor:
        count = x.shape[0]
        return P.transpose(P.reshape(x, (count, self.heads, self.head_dim)), (1, 0, 2))

    def weights(self, h: Tensor, zeta: Tensor) -> Tensor:
        q = self._split(P.matmul(h, self.W_Q))
        k = self._split(P.matmul(h, self.W_K))
        logits = P.scale(P.matmul(q, P.swap_last_two(k)), 1.0 / math.sqrt(self.head_dim))
        count = zeta.shape[0]
        diff = P.sub(P.reshape(zeta, (count, 1, 2)), P.reshape(zeta, (1, count, 2)))
        dist = P.reshape(P.reduce_sum(P.square(diff), axis=-1), (1, count, count))
        bias = P.mul(P.reshape(self.beta, (self.heads, 1, 1)), dist)
        return P.softmax(P.sub(logits, bias), axis=-1)

    def __call__(self, h: Tensor, zeta: Tensor) -> Tensor:
        v = self._split(P.matmul(h, self.W_V))
        out = P.matmul(self.weights(h, zeta), v)
        out = P.reshape(P.transpose(out, (1, 0, 2)), (h.shape[0], self.channels))
        return P.matmul(out, self.W_O)


class PcLocal(Module):
    """m_ij = GELU(W_c h_i + W_Δ(h_j − h_i) + Φ_geo(g_ij))，聚合 [Σ α_ij m_ij, max_j m_ij] 后经 Φ_out"""

    def __init__(self, rng: np.random.Generator, channels: int) -> None:
        self.channels = channels
        self.W_c = Linear(rng, channels, channels)
        self.W_delta = Linear(rng, channels, channels, bias=False)
        self.geo = FeedForward(rng, EDGE_FEATURES, channels, channels)
        self.w_s = Parameter(scaled_gaussian(rng, channels, (channels, 1)))
        self.out = Linear(rng, 2 * channels, channels)


def edge_geometry(coords: np.ndarray, zeta: Tensor, graph: KnnGraph) -> Tensor:
    """g_ij = [x_j − x_i, ‖x_j − x_i‖₂, ζ_j − ζ_i]，形状 (N, K, 5)"""
    offsets = coords[graph.neighbors] - coords[:, None, :]
    lengths = np.linalg.norm(offsets, axis=-1, keepdims=True)
    count = zeta.shape[0]
    zeta_offsets = P.sub(P.gather(zeta, graph.neighbors, axis=0), P.reshape(zeta, (count, 1, 2)))
    return P.concat([as_tensor(offsets), as_tensor(lengths), zeta_offsets], axis=-1)


def neighborhood_messages(local: PcLocal, h: Tensor, graph: KnnGraph, geometry: Tensor) -> Tensor:
    count = h.shape[0]
    h_i = P.reshape(h, (count, 1, local.channels))
    h_j = P.gather(h, graph.neighbors, axis=0)
    mixed = P.add(P.add(local.W_c(h_i), local.W_delta(P.sub(h_j, h_i))), local.geo(geometry))
    return P.gelu(mixed)


def neighborhood_weights(local: PcLocal, messages: Tensor) -> Tensor:
    scores = P.scale(P.matmul(messages, local.w_s), 1.0 / math.sqrt(local.channels))
    return P.softmax(scores, axis=1)


def pc_local_forward(local: PcLocal, h: Tensor, graph: KnnGraph, coords: np.ndarray, zeta: Tensor) -> Tensor:
    """
    Args:
        h: (N, C)
        graph: 与 N 一致的近邻图
        coords: (N, 2) 物理坐标
        zeta: (N, 2) 坐标图

    Raises:
        ShapeError: 形状与图不一致
    """
    if h.ndim != 2 or h.shape[0] != graph.neighbors.shape[0] or zeta.shape != (h.shape[0], 2):
        error_msg = f"局部消息传递输入不一致: h{h.shape}, 图 {graph.neighbors.shape}, ζ{zeta.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    messages = neighborhood_messages(local, h, graph, edge_geometry(coords, zeta, graph))
    alpha = neighborhood_weights(local, messages)
    attended = P.reduce_sum(P.mul(alpha, messages), axis=1)
    pooled = P.reduce_max(messages, axis=1)
    return local.out(P.concat([attended, pooled], axis=-1))


class PcBlock(Module):
    def __init__(self, rng: np.random.Generator, config: PcConfig) -> None:
        channels = config.channels
        self.norm1 = LayerNorm(channels)
        self.attn = PcGlobalAttention(rng, channels, config.heads)
        self.gate_attn = Parameter(np.full(channels, config.gate_init))
        self.norm2 = LayerNorm(channels)
        self.local = PcLocal(rng, channels)
        self.gate_local = Parameter(np.full(channels, config.gate_init))
        self.norm3 = LayerNorm(channels)
        self.mlp = FeedForward(rng, channels, config.mlp_ratio * channels, channels)
        self.gate_mlp = Parameter(np.full(channels, config.gate_init))


def pc_block_forward(block: PcBlock, h: Tensor, graph: KnnGraph, coords: np.ndarray, zeta: Tensor) -> Tensor:
    """三次门控残差：全局注意力、局部消息传递、前馈网络，依次进行"""
    h = P.add(h, P.mul(block.gate_attn, block.attn(block.norm1(h), zeta)))
    h = P.add(h, P.mul(block.gate_local, pc_local_forward(block.local, block.norm2(h), graph, coords, zeta)))
    return P.add(h, P.mul(block.gate_mlp, block.mlp(block.norm3(h))))


class PcModelState(Module):
    def __init__(self, config: PcConfig, seed: int = 0) -> None:
        config.validate()
        self.config = config
        rng = make_rng(seed, stream=1)
        self.chart = ChartNet(rng, config.chart_hidden)
        self.lift = FeedForward(rng, 2 + config.feature_dim + 2, config.channels, config.channels)
        self.chart_broadcast = Linear(rng, 2, config.channels)
        self.blocks: List[PcBlock] = [PcBlock(rng, config) for _ in range(config.layers)]
        self.final_norm = LayerNorm(config.channels)
        self.readout_u = Linear(rng, config.channels, 1, zero_init=True)
        self.readout_q = Linear(rng, config.channels, 2, zero_init=True)
        self.buffers: Dict[str, np.ndarray] = {}
        self.assign_names()

    def set_training(self, training: bool) -> None:
        """点云模型不含 dropout，训练与推理前向一致"""

    def set_normalizer(self, stats: Dict[str, np.ndarray]) -> None:
        self.buffers = {f"{BUFFER_PREFIX}{key}": np.asarray(value, dtype=np.float64) for key, value in stats.items()}

    def normalizer(self, key: str) -> Optional[np.ndarray]:
        return self.buffers.get(f"{BUFFER_PREFIX}{key}")


def canonical_order(pc: PointCloud) -> np.ndarray:
    """按 (x, y, 特征) 字典序排列；只依赖点的取值，与输入顺序无关"""
    keys = [pc.coords[:, 1], pc.coords[:, 0]]
    if pc.feats is not None:
        keys = [pc.feats[:, c] for c in range(pc.feature_dim - 1, -1, -1)] + keys
    return np.lexsort(keys)


def pc_model_forward(ms: PcModelState, pc: PointCloud) -> Tuple[Tensor, Optional[Tensor]]:
    """
    点云前向：内部先按取值规范排序，结果再还原到输入顺序，因此对输入置换严格等变

    Returns:
        (u_hat (N, 1), q_hat (N, 2) 或 None)

    Raises:
        ShapeError: 特征维度不一致，或点数不足 k+1
    """
    config = ms.config
    if pc.feature_dim != config.feature_dim:
        error_msg = f"点云特征维度 {pc.feature_dim} 与配置 d_f={config.feature_dim} 不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    if pc.size < config.k + 1:
        error_msg = f"点云只有 {pc.size} 个点，KNN 邻居数 k={config.k} 要求至少 {config.k + 1} 个点"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    order = canonical_order(pc)
    inverse = np.argsort(order)
    cloud = pc.permuted(order)
    graph = build_knn(cloud, config.k)

    x = as_tensor(cloud.coords)
    zeta = chart_forward(ms.chart, x).values
    inputs = [x]
    if cloud.feats is not None:
        feats = cloud.feats
        mean, std = ms.normalizer("feat_mean"), ms.normalizer("feat_std")
        if mean is not None and std is not None:
            feats = (feats - mean) / std
        inputs.append(as_tensor(feats))
    inputs.append(zeta)
    h = P.add(ms.lift(P.concat(inputs, axis=-1)), ms.chart_broadcast(zeta))
    for block in ms.blocks:
        h = pc_block_forward(block, h, graph, cloud.coords, zeta)
    h = ms.final_norm(h)

    u_hat = P.gather(ms.readout_u(h), inverse, axis=0)
    mean, std = ms.normalizer("target_mean"), ms.normalizer("target_std")
    if mean is not None and std is not None:
        u_hat = P.add(P.scale(u_hat, float(np.ravel(std)[0])), as_tensor(mean))
    q_hat = None
    if config.with_flux:
        q_hat = P.gather(ms.readout_q(h), inverse, axis=0)
        if std is not None:
            q_hat = P.scale(q_hat, float(np.ravel(std)[0]))
    return u_hat, q_hat


def pc_chart(ms: PcModelState, pc: PointCloud) -> ChartCoords:
    return chart_forward(ms.chart, pc.coords)


def save_pc_model(path: str, ms: PcModelState) -> None:
    records = ms.state_dict()
    records.update(ms.buffers)
    save_records(path, records)
    with open(f"{path}.json", "w", encoding="utf-8") as handle:
        json.dump(ms.config.to_dict(), handle, ensure_ascii=False, indent=2)
    logger.info(f"点云模型检查点已保存: {path}（{ms.parameter_count()} 个参数）")


def load_pc_model(path: str, config: Optional[PcConfig] = None) -> PcModelState:
    """
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
                config = PcConfig.from_dict(json.load(handle))
            except json.JSONDecodeError as e:
                raise CheckpointError(f"检查点配置文件解析失败: {e}") from e
    records = load_records(path)
    ms = PcModelState(config)
    ms.load_state_dict(records)
    ms.buffers = {key: value for key, value in records.items() if key.startswith(BUFFER_PREFIX)}
    logger.info(f"已加载点云模型检查点: {path}")
    return ms
