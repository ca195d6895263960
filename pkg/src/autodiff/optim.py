"""AdamW 优化器与 one-cycle 学习率调度"""

import math
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from src.autodiff.tensor import Parameter
from src.logging.logger_config import logger


@dataclass
class OneCycleSchedule:
    """
    线性预热到 max_lr，随后余弦退火到 max_lr / final_div

    预热起点为 max_lr / initial_div。warmup_frac=0 时第 0 步即为 max_lr。
    """

    max_lr: float
    total_steps: int
    warmup_frac: float = 0.3
    initial_div: float = 25.0
    final_div: float = 25.0

    def __post_init__(self) -> None:
        if self.max_lr <= 0 or self.total_steps < 1:
            raise ValueError(f"非法调度参数: max_lr={self.max_lr}, total_steps={self.total_steps}")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError(f"预热比例必须在 [0, 1) 内: {self.warmup_frac}")

    def __call__(self, step: int) -> float:
        warmup = int(round(self.warmup_frac * self.total_steps))
        initial = self.max_lr / self.initial_div
        final = self.max_lr / self.final_div
        if warmup > 0 and step < warmup:
            return initial + (self.max_lr - initial) * step / warmup
        span = max(self.total_steps - warmup, 1)
        t = min(max(step - warmup, 0) / span, 1.0)
        return final + (self.max_lr - final) * 0.5 * (1.0 + math.cos(math.pi * t))


@dataclass
class OptimizerState:
    schedule: OneCycleSchedule
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def lr(self) -> float:
        return self.schedule(self.step)


def adamw_step(state: OptimizerState, params: Sequence[Parameter]) -> float:
    """
    执行一次解耦权重衰减的 Adam 更新

    Args:
        state: 优化器状态（就地更新动量缓冲与步数）
        params: 待更新参数，grad 必须已填充

    Returns:
        本步使用的学习率

    Raises:
        ValueError: 某个参数缺少梯度
    """
    lr = state.schedule(state.step)
    t = state.step + 1
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t

    for param in params:
        if param.grad is None:
            error_msg = f"参数 {param.name or '<unnamed>'} 缺少梯度，无法更新"
            logger.error(error_msg)
            raise ValueError(error_msg)
        key = param.name or str(id(param))
        m = state.first_moment.get(key)
        v = state.second_moment.get(key)
        if m is None or m.shape != param.shape:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * param.grad
        v = state.beta2 * v + (1.0 - state.beta2) * param.grad * param.grad
        state.first_moment[key] = m
        state.second_moment[key] = v

        m_hat = m / bias1
        v_hat = v / bias2
        decayed = param.data * (1.0 - lr * state.weight_decay)
        param.data = decayed - lr * m_hat / (np.sqrt(v_hat) + state.eps)

    state.step += 1
    return lr
