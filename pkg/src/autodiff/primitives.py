"""
可微原语目录

每个原语用 numpy 完成前向计算，并把解析推导的反向函数登记到当前线程的 tape 上。
目录是固定的：CATO 的全部运算都由这里的原语组合而成。
"""

import math
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from src.autodiff.tensor import Tensor, count_flops, get_tape
from src.errors import ShapeError
from src.logging.logger_config import logger

PRIMITIVES: Dict[str, Callable[..., Tensor]] = {}

_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def primitive(name: str) -> Callable:
    def register(fn: Callable[..., Tensor]) -> Callable[..., Tensor]:
        PRIMITIVES[name] = fn
        return fn

    return register


def forward_primitive(op: str, inputs: Sequence[Tensor], **attrs) -> Tensor:
    """
    按名称调用目录中的原语

    Args:
        op: 原语名称
        inputs: 输入张量列表
        **attrs: 原语的非张量属性（axis、shape 等）

    Returns:
        已记录到 tape 的输出张量

    Raises:
        ValueError: 原语不在目录中
    """
    fn = PRIMITIVES.get(op)
    if fn is None:
        error_msg = f"未知原语: {op}，可用原语: {sorted(PRIMITIVES)}"
        logger.error(error_msg)
        raise ValueError(error_msg)
    if op == "concat":
        return fn(list(inputs), **attrs)
    return fn(*inputs, **attrs)


def _emit(op: str, inputs: Sequence[Tensor], out: np.ndarray, backward) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    tensor = Tensor.wrap(out, requires, op)
    tape = get_tape()
    if tape.enabled:
        tape.record(op, inputs, tensor, backward)
    return tensor


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        error_msg = f"原语 {op} 形状不兼容: {a.shape} 与 {b.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg) from e


# ---- 逐元素二元运算 ----


@primitive("add")
def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", (a, b), a.data + b.data, backward)


@primitive("sub")
def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit("sub", (a, b), a.data - b.data, backward)


@primitive("mul")
def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)

    def backward(g):
        grad_a = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        grad_b = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return grad_a, grad_b

    return _emit("mul", (a, b), a.data * b.data, backward)


@primitive("scale")
def scale(a: Tensor, factor: float) -> Tensor:
    def backward(g):
        return (g * factor,)

    return _emit("scale", (a,), a.data * factor, backward)


@primitive("matmul")
def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        error_msg = f"matmul 需要至少二维输入: {a.shape} @ {b.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    if a.shape[-1] != b.shape[-2]:
        error_msg = f"matmul 内维不一致: {a.shape} @ {b.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"matmul 批维不兼容: {a.shape} @ {b.shape}") from e
    count_flops("matmul", out.size * a.shape[-1])

    def backward(g):
        grad_a = grad_b = None
        if a.requires_grad:
            grad_a = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            grad_b = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return grad_a, grad_b

    return _emit("matmul", (a, b), out, backward)


# ---- 逐元素一元运算 ----


@primitive("tanh")
def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _emit("tanh", (a,), out, backward)


@primitive("silu")
def silu(a: Tensor) -> Tensor:
    sig = special.expit(a.data)
    out = a.data * sig

    def backward(g):
        return (g * sig * (1.0 + a.data * (1.0 - sig)),)

    return _emit("silu", (a,), out, backward)


def gelu_array(x: np.ndarray) -> np.ndarray:
    """精确 GELU: x·Φ(x)"""
    return 0.5 * x * (1.0 + special.erf(x / _SQRT_2))


def gelu_derivative(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + special.erf(x / _SQRT_2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


@primitive("gelu")
def gelu(a: Tensor) -> Tensor:
    def backward(g):
        return (g * gelu_derivative(a.data),)

    return _emit("gelu", (a,), gelu_array(a.data), backward)


@primitive("sin")
def sin(a: Tensor) -> Tensor:
    def backward(g):
        return (g * np.cos(a.data),)

    return _emit("sin", (a,), np.sin(a.data), backward)


@primitive("cos")
def cos(a: Tensor) -> Tensor:
    def backward(g):
        return (-g * np.sin(a.data),)

    return _emit("cos", (a,), np.cos(a.data), backward)


@primitive("square")
def square(a: Tensor) -> Tensor:
    def backward(g):
        return (2.0 * g * a.data,)

    return _emit("square", (a,), a.data * a.data, backward)


@primitive("sqrt")
def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def backward(g):
        # 在 0 处取次梯度 0
        safe = np.where(out > 0.0, out, 1.0)
        return (np.where(out > 0.0, 0.5 * g / safe, 0.0),)

    return _emit("sqrt", (a,), out, backward)


# ---- 归一化 ----


@primitive("softmax")
def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _emit("softmax", (a,), out, backward)


@primitive("layernorm")
def layernorm(a: Tensor, eps: float = 1e-12) -> Tensor:
    """最后一维标准化（不含缩放与平移）"""
    mean = np.mean(a.data, axis=-1, keepdims=True)
    centered = a.data - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = centered * inv

    def backward(g):
        g_mean = np.mean(g, axis=-1, keepdims=True)
        gy_mean = np.mean(g * out, axis=-1, keepdims=True)
        return (inv * (g - g_mean - out * gy_mean),)

    return _emit("layernorm", (a,), out, backward)


# ---- 形状变换 ----


@primitive("reshape")
def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as e:
        error_msg = f"无法把形状 {a.shape} 变换为 {tuple(shape)}"
        logger.error(error_msg)
        raise ShapeError(error_msg) from e

    def backward(g):
        return (g.reshape(a.shape),)

    return _emit("reshape", (a,), out, backward)


@primitive("transpose")
def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose 轴序 {axes} 与维数 {a.ndim} 不匹配")
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _emit("transpose", (a,), np.transpose(a.data, axes), backward)


@primitive("gather")
def gather(a: Tensor, indices: np.ndarray, axis: int = 0) -> Tensor:
    """沿 axis 按整数索引数组取值（np.take 语义）"""
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % a.ndim
    if indices.size and (indices.min() < 0 or indices.max() >= a.shape[axis]):
        error_msg = f"gather 索引越界: 轴 {axis} 长度 {a.shape[axis]}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    out = np.take(a.data, indices, axis=axis)

    def backward(g):
        moved = np.moveaxis(g, list(range(axis, axis + indices.ndim)), list(range(indices.ndim)))
        rest = a.shape[:axis] + a.shape[axis + 1 :]
        accum = np.zeros((a.shape[axis],) + rest)
        np.add.at(accum, indices, moved)
        return (np.moveaxis(accum, 0, axis),)

    return _emit("gather", (a,), out, backward)


@primitive("concat")
def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        error_msg = f"concat 形状不兼容: {[t.shape for t in tensors]}"
        logger.error(error_msg)
        raise ShapeError(error_msg) from e
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit("concat", tuple(tensors), out, backward)


# ---- 规约 ----


@primitive("reduce_sum")
def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("reduce_sum", (a,), np.asarray(out, dtype=np.float64), backward)


@primitive("reduce_mean")
def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.data.size // max(np.asarray(out).size, 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape) / count,)

    return _emit("reduce_mean", (a,), np.asarray(out, dtype=np.float64), backward)


@primitive("reduce_max")
def reduce_max(a: Tensor, axis: int = -1) -> Tensor:
    """沿单个轴取最大值；梯度流向第一个最大值位置"""
    axis = axis % a.ndim
    arg = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, arg, axis=axis).squeeze(axis)

    def backward(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, arg, np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return _emit("reduce_max", (a,), out, backward)


# ---- 卷积 ----


@primitive("depthwise_conv2d")
def depthwise_conv2d(x: Tensor, kernel: Tensor) -> Tensor:
    """
    逐通道 k×k 互相关，零填充，输出与输入同形

    Args:
        x: (B, H, W, C)
        kernel: (C, k, k)，k 为奇数
    """
    if x.ndim != 4 or kernel.ndim != 3 or kernel.shape[0] != x.shape[-1]:
        error_msg = f"depthwise_conv2d 形状不兼容: x{x.shape}, kernel{kernel.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    k = kernel.shape[1]
    if k % 2 == 0 or kernel.shape[2] != k:
        raise ShapeError(f"卷积核必须为奇数边长的方阵，实际 {kernel.shape[1:]}")
    _, height, width, _ = x.shape
    pad = k // 2
    padded = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    out = np.zeros_like(x.data)
    for di in range(k):
        for dj in range(k):
            out += padded[:, di : di + height, dj : dj + width, :] * kernel.data[:, di, dj]
    count_flops("depthwise_conv2d", x.data.size * k * k)

    def backward(g):
        grad_padded = np.zeros_like(padded)
        grad_kernel = np.zeros_like(kernel.data)
        for di in range(k):
            for dj in range(k):
                window = padded[:, di : di + height, dj : dj + width, :]
                grad_padded[:, di : di + height, dj : dj + width, :] += g * kernel.data[:, di, dj]
                grad_kernel[:, di, dj] = np.sum(g * window, axis=(0, 1, 2))
        grad_x = grad_padded[:, pad : pad + height, pad : pad + width, :]
        return grad_x, grad_kernel

    return _emit("depthwise_conv2d", (x, kernel), out, backward)


# ---- 由原语组合的便捷函数 ----


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def swap_last_two(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """乘以常量掩码 keep/(1-p)；p=0 时原样返回"""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout 概率必须在 [0, 1) 内: {p}")
    if p == 0.0:
        return a
    keep = (rng.random(a.shape) >= p).astype(np.float64) / (1.0 - p)
    return mul(a, Tensor.wrap(keep, False, "dropout"))
