"""坐标图轴向自注意力：沿网格行（位置 ξ）与列（位置 η）分别做多头注意力后相加"""

from typing import Optional, Tuple

import numpy as np

from src.attention.rope import RopeConfig, rope_rotate
from src.autodiff import primitives as P
from src.autodiff.module import Module, scaled_gaussian
from src.autodiff.tensor import Parameter, Tensor, as_tensor, flop_scope, no_grad
from src.errors import ShapeError
from src.geometry.chart import ChartCoords
from src.logging.logger_config import logger


class AxialAttentionLayer(Module):
    """
    行、列两个分支共享 W_Q/W_K/W_V，各自有输出投影 W_O_row、W_O_col

    Args:
        rng: 参数初始化随机数发生器
        channels: 通道数 C
        heads: 头数 M，要求 C % M == 0 且 C/M 为偶数
        theta: RoPE 频率底数
        position_scale: 坐标图值的位置缩放
        dropout: 注意力输出的 dropout 概率（仅训练时生效）
    """

    def __init__(
        self,
        rng: np.random.Generator,
        channels: int,
        heads: int,
        theta: float = 10000.0,
        position_scale: float = np.pi,
        dropout: float = 0.0,
    ) -> None:
        if heads <= 0 or channels % heads != 0:
            error_msg = f"通道数 {channels} 不能被头数 {heads} 整除"
            logger.error(error_msg)
            raise ShapeError(error_msg)
        self.channels = channels
        self.heads = heads
        self.head_dim = channels // heads
        self.rope = RopeConfig(head_dim=self.head_dim, theta=theta, scale=position_scale)
        self.dropout = dropout
        self.training = False
        self.dropout_rng = rng
        self.W_Q = Parameter(scaled_gaussian(rng, channels, (channels, channels)))
        self.W_K = Parameter(scaled_gaussian(rng, channels, (channels, channels)))
        self.W_V = Parameter(scaled_gaussian(rng, channels, (channels, channels)))
        self.W_O_row = Parameter(scaled_gaussian(rng, channels, (channels, channels)))
        self.W_O_col = Parameter(scaled_gaussian(rng, channels, (channels, channels)))

    def _split_heads(self, x: Tensor) -> Tensor:
        batch, height, width, _ = x.shape
        x = P.reshape(x, (batch, height, width, self.heads, self.head_dim))
        return P.transpose(x, (0, 3, 1, 2, 4))

    def _merge_heads(self, x: Tensor) -> Tensor:
        batch, _, height, width, _ = x.shape
        x = P.transpose(x, (0, 2, 3, 1, 4))
        return P.reshape(x, (batch, height, width, self.channels))

    def attend(self, h: Tensor, positions: Tensor, w_out: Tensor) -> Tuple[Tensor, Tensor]:
        """
        沿最后一个空间轴（W）做注意力

        Args:
            h: (B, H, W, C)
            positions: (H, W) 或 (B, H, W) 坐标图值
            w_out: 输出投影

        Returns:
            (输出 (B, H, W, C), softmax 权重 (B, M, H, W, W))
        """
        scaled = P.scale(positions, self.rope.scale)
        if scaled.ndim == 2:
            scaled = P.reshape(scaled, (1, 1) + scaled.shape)
        else:
            scaled = P.reshape(scaled, (scaled.shape[0], 1) + scaled.shape[1:])
        q = rope_rotate(self._split_heads(P.matmul(h, self.W_Q)), scaled, self.rope)
        k = rope_rotate(self._split_heads(P.matmul(h, self.W_K)), scaled, self.rope)
        v = self._split_heads(P.matmul(h, self.W_V))
        with flop_scope("attention"):
            logits = P.scale(P.matmul(q, P.swap_last_two(k)), 1.0 / np.sqrt(self.head_dim))
            weights = P.softmax(logits, axis=-1)
            out = self._merge_heads(P.matmul(weights, v))
        return P.matmul(out, w_out), weights


def _check_positions(h: Tensor, positions: Tensor, name: str) -> None:
    if h.ndim != 4:
        error_msg = f"注意力输入必须为 (B, H, W, C)，实际 {h.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    if positions.shape[-2:] != h.shape[1:3] or positions.ndim not in (2, 3):
        error_msg = f"{name} 形状 {positions.shape} 与空间维 {h.shape[1:3]} 不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    if positions.ndim == 3 and positions.shape[0] != h.shape[0]:
        error_msg = f"{name} 批维 {positions.shape[0]} 与输入批维 {h.shape[0]} 不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)


def _transpose_spatial(x: Tensor) -> Tensor:
    if x.ndim == 2:
        return P.transpose(x, (1, 0))
    if x.ndim == 3:
        return P.transpose(x, (0, 2, 1))
    return P.transpose(x, (0, 2, 1, 3))


def row_attention(layer: AxialAttentionLayer, h: Tensor, xi) -> Tensor:
    """每一行 i 内的 W 个 token 互相注意，位置为 ξ_{i·}"""
    xi = as_tensor(xi)
    _check_positions(h, xi, "ξ")
    out, _ = layer.attend(h, xi, layer.W_O_row)
    return out


def col_attention(layer: AxialAttentionLayer, h: Tensor, eta) -> Tensor:
    """每一列 j 内的 H 个 token 互相注意，位置为 η_{·j}"""
    eta = as_tensor(eta)
    _check_positions(h, eta, "η")
    out, _ = layer.attend(_transpose_spatial(h), _transpose_spatial(eta), layer.W_O_col)
    return _transpose_spatial(out)


def attention_weights(layer: AxialAttentionLayer, h: Tensor, zeta: ChartCoords) -> Tuple[np.ndarray, np.ndarray]:
    """返回行、列两个分支的 softmax 权重（numpy），用于检查与诊断；不写入求导记录带"""
    with no_grad():
        xi, eta = zeta.xi, zeta.eta
        _check_positions(h, xi, "ξ")
        _, row_weights = layer.attend(h, xi, layer.W_O_row)
        _, col_weights = layer.attend(_transpose_spatial(h), _transpose_spatial(eta), layer.W_O_col)
    return row_weights.numpy(), col_weights.numpy()


def axial_forward(
    layer: AxialAttentionLayer,
    h: Tensor,
    zeta: ChartCoords,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """A(h, ζ) = Attn_row(h, ξ) + Attn_col(h, η)，训练模式下对和做 dropout"""
    out = P.add(row_attention(layer, h, zeta.xi), col_attention(layer, h, zeta.eta))
    if layer.training and layer.dropout > 0.0:
        out = P.dropout(out, layer.dropout, rng or layer.dropout_rng)
    return out
