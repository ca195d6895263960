"""参数容器基类与常用层（线性层、LayerNorm、前馈网络）"""

from typing import Dict, List, Optional, Tuple

import numpy as np

from src.autodiff import primitives as P
from src.autodiff.tensor import Parameter, Tensor
from src.errors import CheckpointError, ShapeError
from src.logging.logger_config import logger


class Module:
    """
    参数树节点

    子模块、参数以及模块列表按属性定义顺序遍历，参数名由属性路径拼接，
    例如 ``blocks.0.attn.W_Q``。
    """

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Parameter]]:
        result: List[Tuple[str, Parameter]] = []
        for attr, value in vars(self).items():
            path = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                result.append((path, value))
            elif isinstance(value, Module):
                result.extend(value.named_parameters(path + "."))
            elif isinstance(value, (list, tuple)) and value and isinstance(value[0], Module):
                for index, child in enumerate(value):
                    result.extend(child.named_parameters(f"{path}.{index}."))
        return result

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        """把属性路径写回参数名，并检查唯一性"""
        seen = set()
        for name, param in self.named_parameters():
            if name in seen:
                raise ValueError(f"参数名重复: {name}")
            seen.add(name)
            param.name = name

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        按名称加载参数

        Raises:
            CheckpointError: 缺少参数或形状不一致
        """
        for name, param in self.named_parameters():
            if name not in state:
                error_msg = f"检查点缺少参数: {name}"
                logger.error(error_msg)
                raise CheckpointError(error_msg)
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                error_msg = f"参数 {name} 形状不一致: 检查点 {value.shape}, 模型 {param.shape}"
                logger.error(error_msg)
                raise CheckpointError(error_msg)
            param.data = value.copy()

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


def scaled_gaussian(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> np.ndarray:
    """标准差 1/√fan_in 的高斯初始化"""
    return rng.standard_normal(shape) / np.sqrt(max(fan_in, 1))


class Linear(Module):
    """y = x W + b，W 形状 (in, out)"""

    def __init__(
        self,
        rng: np.random.Generator,
        in_features: int,
        out_features: int,
        bias: bool = True,
        zero_init: bool = False,
    ) -> None:
        self.in_features = in_features
        self.out_features = out_features
        if zero_init:
            weight = np.zeros((in_features, out_features))
        else:
            weight = scaled_gaussian(rng, in_features, (in_features, out_features))
        self.W = Parameter(weight)
        self.b: Optional[Parameter] = Parameter(np.zeros(out_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            error_msg = f"线性层输入维度 {x.shape[-1]} 与权重输入维度 {self.in_features} 不一致"
            logger.error(error_msg)
            raise ShapeError(error_msg)
        return P.linear(x, self.W, self.b)


class LayerNorm(Module):
    """带缩放与平移的层归一化；identity=True 时直接返回输入"""

    def __init__(self, dim: int, eps: float = 1e-12, identity: bool = False) -> None:
        self.eps = eps
        self.identity = identity
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        if self.identity:
            return x
        return P.add(P.mul(P.layernorm(x, eps=self.eps), self.gamma), self.beta)


class FeedForward(Module):
    """两层前馈网络: Linear → 激活 → Linear"""

    ACTIVATIONS = {"gelu": P.gelu, "silu": P.silu, "tanh": P.tanh}

    def __init__(
        self,
        rng: np.random.Generator,
        in_features: int,
        hidden: int,
        out_features: int,
        activation: str = "gelu",
    ) -> None:
        if activation not in self.ACTIVATIONS:
            raise ValueError(f"不支持的激活函数: {activation}")
        self.activation = activation
        self.fc1 = Linear(rng, in_features, hidden)
        self.fc2 = Linear(rng, hidden, out_features)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.ACTIVATIONS[self.activation](self.fc1(x)))
