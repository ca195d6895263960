"""局部算子 L(h) = PWConv(GELU(DWConv(h)))，在索引空间上做零填充卷积"""

import numpy as np

from src.autodiff import primitives as P
from src.autodiff.module import Module, scaled_gaussian
from src.autodiff.tensor import Parameter, Tensor
from src.errors import ShapeError
from src.logging.logger_config import logger


class LocalStencil(Module):
    """
    深度 k×k 卷积 + GELU + 1×1 逐点卷积，两个卷积都带零初始化偏置

    Args:
        rng: 参数初始化随机数发生器
        channels: 通道数 C
        kernel_size: 奇数边长 k
    """

    def __init__(self, rng: np.random.Generator, channels: int, kernel_size: int = 3) -> None:
        if kernel_size < 1 or kernel_size % 2 == 0:
            error_msg = f"局部卷积核边长必须为正奇数，实际 {kernel_size}"
            logger.error(error_msg)
            raise ShapeError(error_msg)
        self.channels = channels
        self.kernel_size = kernel_size
        self.depthwise = Parameter(scaled_gaussian(rng, kernel_size * kernel_size, (channels, kernel_size, kernel_size)))
        self.depthwise_bias = Parameter(np.zeros(channels))
        self.pointwise = Parameter(scaled_gaussian(rng, channels, (channels, channels)))
        self.pointwise_bias = Parameter(np.zeros(channels))


def local_forward(stencil: LocalStencil, h: Tensor) -> Tensor:
    """
    Args:
        stencil: 局部算子参数
        h: (B, H, W, C)

    Returns:
        与 h 同形的输出
    """
    if h.ndim != 4 or h.shape[-1] != stencil.channels:
        error_msg = f"局部算子输入必须为 (B, H, W, {stencil.channels})，实际 {h.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    mixed = P.add(P.depthwise_conv2d(h, stencil.depthwise), stencil.depthwise_bias)
    return P.linear(P.gelu(mixed), stencil.pointwise, stencil.pointwise_bias)
