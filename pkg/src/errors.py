"""异常类型定义模块，命令行根据异常类型决定退出码"""


class ShapeError(ValueError):
    """张量形状不匹配或网格尺寸不满足要求"""


class NumericError(ArithmeticError):
    """计算结果出现 NaN/Inf 等非有限值"""


class SolverError(RuntimeError):
    """迭代求解器在迭代上限内未收敛"""


class FitError(RuntimeError):
    """通道表拟合在给定宽度预算内未达到容差"""


class BoundViolation(RuntimeError):
    """理论界校验失败"""

    def __init__(self, message: str, reports: list | None = None) -> None:
        super().__init__(message)
        self.reports = reports or []


class FoldOverError(ValueError):
    """网格扭曲过大导致雅可比行列式非正"""


class CheckpointError(ValueError):
    """检查点文件格式错误或与模型不匹配"""
