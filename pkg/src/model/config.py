"""CATO 网络结构配置与各基准的结构预设"""

import math
from dataclasses import asdict, dataclass, replace
from typing import Dict, Optional

from src.logging.logger_config import logger

CHART_MODES = ("learned", "normalized")
VARIANTS = ("cato", "lift-readout")


@dataclass
class CatoConfig:
    """
    Args:
        layers: CATO 块数 L
        channels: 隐层宽度 C
        heads: 注意力头数 M
        mlp_ratio: 块内前馈网络扩张倍数
        kernel_size: 局部深度卷积核边长 k（奇数）
        theta: RoPE 频率底数
        position_scale: 坐标图值的位置缩放
        chart_hidden: 坐标图网络隐层宽度
        feature_dim: 逐节点输入特征维度 d_f
        dropout: 注意力输出 dropout 概率
        core_mode: 理论分析用的核心模式（LN 恒等、关闭局部分支与末端 LN、dropout=0）
        chart_mode: learned 为可学习坐标图，normalized 为逐样本归一化坐标
        variant: cato 或不含 CATO 块的 lift-readout 对照
        lift_hidden: 提升网络隐层宽度，缺省为 C
        mlp_hidden: 块内前馈隐层宽度，缺省为 mlp_ratio·C
    """

    layers: int = 2
    channels: int = 32
    heads: int = 4
    mlp_ratio: int = 4
    kernel_size: int = 3
    theta: float = 10000.0
    position_scale: float = math.pi
    chart_hidden: int = 64
    feature_dim: int = 1
    dropout: float = 0.0
    core_mode: bool = False
    chart_mode: str = "learned"
    variant: str = "cato"
    lift_hidden: Optional[int] = None
    mlp_hidden: Optional[int] = None

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads

    @property
    def lift_width(self) -> int:
        return self.lift_hidden or self.channels

    @property
    def mlp_width(self) -> int:
        return self.mlp_hidden or self.mlp_ratio * self.channels

    @property
    def local_enabled(self) -> bool:
        return not self.core_mode

    def validate(self) -> None:
        """
        Raises:
            ValueError: 任一字段不满足约束
        """
        problems = []
        if self.channels <= 0 or self.heads <= 0 or self.channels % self.heads != 0:
            problems.append(f"channels={self.channels} 必须能被 heads={self.heads} 整除")
        elif self.head_dim % 2 != 0:
            problems.append(f"头维度 {self.head_dim} 必须为偶数")
        if self.variant == "cato" and self.layers < 1:
            problems.append(f"layers 至少为 1，实际 {self.layers}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            problems.append(f"kernel_size 必须为正奇数，实际 {self.kernel_size}")
        if self.feature_dim < 0:
            problems.append(f"feature_dim 不能为负，实际 {self.feature_dim}")
        if not 0.0 <= self.dropout < 1.0:
            problems.append(f"dropout 必须在 [0, 1) 内，实际 {self.dropout}")
        if self.core_mode and self.dropout != 0.0:
            problems.append("核心模式下 dropout 必须为 0")
        if self.chart_mode not in CHART_MODES:
            problems.append(f"未知 chart_mode: {self.chart_mode}，可选 {CHART_MODES}")
        if self.variant not in VARIANTS:
            problems.append(f"未知 variant: {self.variant}，可选 {VARIANTS}")
        if self.theta <= 0 or self.chart_hidden <= 0 or self.mlp_ratio <= 0:
            problems.append("theta、chart_hidden、mlp_ratio 必须为正")
        if problems:
            error_msg = "模型配置非法: " + "; ".join(problems)
            logger.error(error_msg)
            raise ValueError(error_msg)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "CatoConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            error_msg = f"模型配置包含未知字段: {sorted(unknown)}"
            logger.error(error_msg)
            raise ValueError(error_msg)
        return cls(**data)


ARCH_PRESETS: Dict[str, CatoConfig] = {
    "darcy": CatoConfig(layers=8, channels=96, heads=8),
    "navier-stokes": CatoConfig(layers=8, channels=128, heads=8),
    "elasticity": CatoConfig(layers=8, channels=144, heads=8),
    "plasticity": CatoConfig(layers=8, channels=160, heads=8),
    "airfoil": CatoConfig(layers=8, channels=128, heads=8),
    "pipe": CatoConfig(layers=8, channels=96, heads=8),
    "desk": CatoConfig(layers=2, channels=32, heads=4),
    "tiny": CatoConfig(layers=1, channels=8, heads=2, chart_hidden=8),
}


def arch_preset(name: str, **overrides) -> CatoConfig:
    """按名称取结构预设并覆盖部分字段"""
    if name not in ARCH_PRESETS:
        error_msg = f"未知结构预设: {name}，可选 {sorted(ARCH_PRESETS)}"
        logger.error(error_msg)
        raise ValueError(error_msg)
    config = replace(ARCH_PRESETS[name], **overrides)
    config.validate()
    return config
