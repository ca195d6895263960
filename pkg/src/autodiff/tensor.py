"""张量与反向模式求导记录带（tape）模块"""

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import NumericError, ShapeError
from src.logging.logger_config import logger

BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """
    64位浮点稠密张量

    data 为行主序的 numpy 数组；grad 仅在叶子张量（参数）上由 backward 填充。
    被记录到 tape 上之后不再修改 data。
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str = "") -> None:
        array = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            error_msg = f"张量 {name or '<anonymous>'} 含有非有限值"
            logger.error(error_msg)
            raise NumericError(error_msg)
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad: bool = requires_grad
        self.name: str = name
        self.taped: bool = False

    @classmethod
    def wrap(cls, array: np.ndarray, requires_grad: bool, op: str) -> "Tensor":
        """原语输出的快速构造路径（不复制数组）"""
        if not np.all(np.isfinite(array)):
            error_msg = f"原语 {op} 产生了非有限值"
            logger.error(error_msg)
            raise NumericError(error_msg)
        tensor = cls.__new__(cls)
        tensor.data = array
        tensor.grad = None
        tensor.requires_grad = requires_grad
        tensor.name = ""
        tensor.taped = False
        return tensor

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() 需要单元素张量，实际形状 {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # 运算符重载统一走原语目录
    def __add__(self, other):
        from src.autodiff import primitives as P

        return P.add(self, as_tensor(other))

    def __radd__(self, other):
        from src.autodiff import primitives as P

        return P.add(as_tensor(other), self)

    def __sub__(self, other):
        from src.autodiff import primitives as P

        return P.sub(self, as_tensor(other))

    def __rsub__(self, other):
        from src.autodiff import primitives as P

        return P.sub(as_tensor(other), self)

    def __mul__(self, other):
        from src.autodiff import primitives as P

        if isinstance(other, (int, float)):
            return P.scale(self, float(other))
        return P.mul(self, as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        from src.autodiff import primitives as P

        return P.scale(self, -1.0)

    def __truediv__(self, other):
        from src.autodiff import primitives as P

        if isinstance(other, (int, float)):
            return P.scale(self, 1.0 / float(other))
        raise TypeError("只支持除以标量，张量相除请乘以常量倒数")

    def __matmul__(self, other):
        from src.autodiff import primitives as P

        return P.matmul(self, as_tensor(other))


class Parameter(Tensor):
    """可学习参数，名称在同一 ModelState 内唯一"""

    def __init__(self, data, name: str = "") -> None:
        super().__init__(data, requires_grad=True, name=name)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape})"


def as_tensor(value) -> Tensor:
    """把 numpy 数组或标量包装成常量张量"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class TapeRecord:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


@dataclass
class Tape:
    """线程私有的求导记录带"""

    records: List[TapeRecord] = field(default_factory=list)
    enabled: bool = True

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn) -> None:
        output.taped = True
        self.records.append(TapeRecord(op, tuple(inputs), output, backward))

    def clear(self) -> None:
        for record in self.records:
            record.output.taped = False
        self.records.clear()

    def __len__(self) -> int:
        return len(self.records)


_local = threading.local()


def get_tape() -> Tape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = Tape()
        _local.tape = tape
    return tape


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """在上下文内关闭记录，用于评估与目标量计算"""
    tape = get_tape()
    previous = tape.enabled
    tape.enabled = False
    try:
        yield
    finally:
        tape.enabled = previous


def backward(loss: Tensor) -> None:
    """
    从标量损失出发执行反向传播

    所有可达的叶子张量（requires_grad 且非 tape 输出）的 grad 累加 ∂loss/∂leaf，
    结束后清空 tape。

    Args:
        loss: 由已记录原语产生的标量张量

    Raises:
        ShapeError: 损失不是标量
        ValueError: 损失不在 tape 上
    """
    if loss.data.size != 1:
        error_msg = f"backward 需要标量损失，实际形状 {loss.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    if not loss.taped:
        error_msg = "损失张量不在 tape 上，无法反向传播"
        logger.error(error_msg)
        raise ValueError(error_msg)

    tape = get_tape()
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = {id(record.output) for record in tape.records}

    for record in reversed(tape.records):
        grad_out = grads.pop(id(record.output), None)
        if grad_out is None or not record.output.requires_grad:
            continue
        input_grads = record.backward(grad_out)
        for tensor, grad in zip(record.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            if id(tensor) in produced:
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad
            else:
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)
                tensor.grad = tensor.grad + grad

    tape.clear()


class FlopCounter:
    """
    乘加次数计数器

    在 with 块内，matmul 与卷积原语把各自的乘加次数累加到 total。
    """

    def __init__(self) -> None:
        self.total: int = 0
        self.by_op: Dict[str, int] = {}

    def add(self, op: str, count: int) -> None:
        self.total += int(count)
        self.by_op[op] = self.by_op.get(op, 0) + int(count)

    def __enter__(self) -> "FlopCounter":
        stack = getattr(_local, "counters", None)
        if stack is None:
            stack = []
            _local.counters = stack
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.counters.pop()


@contextlib.contextmanager
def flop_scope(name: str) -> Iterator[None]:
    """块内记录的乘加次数在 by_op 中以 ``name/op`` 归类"""
    previous = getattr(_local, "flop_scope", None)
    _local.flop_scope = name
    try:
        yield
    finally:
        _local.flop_scope = previous


def count_flops(op: str, count: int) -> None:
    scope = getattr(_local, "flop_scope", None)
    key = f"{scope}/{op}" if scope else op
    for counter in getattr(_local, "counters", None) or []:
        counter.add(key, count)
