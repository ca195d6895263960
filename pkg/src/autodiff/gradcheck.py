"""中心差分梯度校验"""

from typing import Callable, List, Sequence

import numpy as np

from src.autodiff.tensor import Tensor, backward, get_tape, no_grad


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, step: float = 1e-5) -> np.ndarray:
    """对 tensor 的每个元素做中心差分，fn 返回标量损失"""
    grad = np.zeros_like(tensor.data)
    original = tensor.data
    flat = original.reshape(-1)
    with no_grad():
        for index in range(flat.size):
            plus = flat.copy()
            plus[index] += step
            tensor.data = plus.reshape(original.shape)
            f_plus = fn().item()
            minus = flat.copy()
            minus[index] -= step
            tensor.data = minus.reshape(original.shape)
            f_minus = fn().item()
            grad.reshape(-1)[index] = (f_plus - f_minus) / (2.0 * step)
    tensor.data = original
    return grad


def analytic_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> List[np.ndarray]:
    get_tape().clear()
    for tensor in tensors:
        tensor.grad = np.zeros_like(tensor.data)
    backward(fn())
    return [tensor.grad.copy() for tensor in tensors]


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max|a-b| / max(max|a|, max|b|, floor)"""
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)), floor)
    return float(np.max(np.abs(a - b), initial=0.0)) / scale


def gradcheck(fn: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5) -> float:
    """
    返回所有张量中最大的相对误差

    Args:
        fn: 无参闭包，读取 tensors 的当前值并返回标量损失
        tensors: 需要校验的张量（requires_grad=True）
        step: 差分步长
    """
    analytic = analytic_gradients(fn, tensors)
    worst = 0.0
    for tensor, grad in zip(tensors, analytic):
        numeric = numerical_gradient(fn, tensor, step)
        worst = max(worst, relative_error(grad, numeric))
    return worst
