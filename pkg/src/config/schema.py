"""
运行配置树：模型结构、损失权重、优化器、数据与点云配置

加载顺序为 预设 → JSON 文件 → 命令行覆盖，最后统一校验。
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Optional

from src.data.generator import DataConfig
from src.logging.logger_config import logger
from src.model.config import ARCH_PRESETS, CatoConfig, arch_preset
from src.physics.loss import LOSS_PRESETS, LossWeights
from src.pointcloud.model import PcConfig
from src.theory.suite import TheorySuiteConfig
from src.training.trainer import OptimConfig

TRAIN_PRESETS: Dict[str, OptimConfig] = {
    "darcy": OptimConfig(lr=5e-4, batch_size=4, epochs=500),
    "navier-stokes": OptimConfig(lr=5e-4, batch_size=2, epochs=500),
    "elasticity": OptimConfig(lr=1e-3, batch_size=1, epochs=500),
    "plasticity": OptimConfig(lr=1e-3, batch_size=8, epochs=500),
    "airfoil": OptimConfig(lr=1e-3, batch_size=4, epochs=500),
    "pipe": OptimConfig(lr=1e-3, batch_size=4, epochs=500),
    "desk": OptimConfig(lr=5e-4, batch_size=4, epochs=50),
    "tiny": OptimConfig(lr=1e-3, batch_size=2, epochs=2, checkpoint_every=1),
}

# 桌面级预设沿用 Darcy 的物理损失权重
_LOSS_FOR_PRESET = {"desk": "darcy", "tiny": "darcy"}

SECTIONS = {
    "model": CatoConfig,
    "loss": LossWeights,
    "optim": OptimConfig,
    "data": DataConfig,
    "pc": PcConfig,
    "theory": TheorySuiteConfig,
}
SCALARS = ("preset", "dataset", "output_dir", "checkpoint", "predictor", "seed", "workers")


@dataclass
class RunConfig:
    preset: str = "desk"
    model: CatoConfig = field(default_factory=lambda: arch_preset("desk"))
    loss: LossWeights = field(default_factory=lambda: replace(LOSS_PRESETS["darcy"]))
    optim: OptimConfig = field(default_factory=lambda: replace(TRAIN_PRESETS["desk"]))
    data: DataConfig = field(default_factory=DataConfig)
    pc: PcConfig = field(default_factory=PcConfig)
    theory: TheorySuiteConfig = field(default_factory=TheorySuiteConfig)
    dataset: str = "./data/darcy32"
    output_dir: str = "./runs/default"
    checkpoint: Optional[str] = None
    predictor: str = "model"
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        """
        Raises:
            ValueError: 任一部分不满足约束
        """
        self.model.validate()
        self.loss.validate()
        self.optim.validate()
        self.data.validate()
        self.pc.validate()
        self.theory.validate()
        if self.workers < 1 or self.seed < 0:
            error_msg = f"workers 必须 ≥ 1 且 seed 非负: workers={self.workers}, seed={self.seed}"
            logger.error(error_msg)
            raise ValueError(error_msg)
        if self.model.feature_dim != 1 or self.pc.feature_dim != 1:
            error_msg = "合成 Darcy 数据只有一个输入特征（系数 a），feature_dim 必须为 1"
            logger.error(error_msg)
            raise ValueError(error_msg)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, ensure_ascii=False, indent=2)


def preset_config(name: str) -> RunConfig:
    """
    Raises:
        ValueError: 未知预设
    """
    if name not in ARCH_PRESETS or name not in TRAIN_PRESETS:
        error_msg = f"未知预设: {name}，可选 {sorted(TRAIN_PRESETS)}"
        logger.error(error_msg)
        raise ValueError(error_msg)
    loss_name = _LOSS_FOR_PRESET.get(name, name)
    return RunConfig(
        preset=name,
        model=arch_preset(name),
        loss=replace(LOSS_PRESETS[loss_name]),
        optim=replace(TRAIN_PRESETS[name]),
    )


def _update_section(section: Any, values: Dict[str, Any], name: str) -> Any:
    known = {item.name for item in fields(section)}
    unknown = set(values) - known
    if unknown:
        error_msg = f"配置节 {name} 包含未知字段: {sorted(unknown)}"
        logger.error(error_msg)
        raise ValueError(error_msg)
    return replace(section, **values)


def apply_overrides(config: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
    """
    Args:
        overrides: 键为 "section.field"（如 "optim.lr"）或顶层标量名，值为 None 的项忽略

    Raises:
        ValueError: 未知节或字段
    """
    grouped: Dict[str, Dict[str, Any]] = {}
    scalars: Dict[str, Any] = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS:
                error_msg = f"未知配置节: {section}"
                logger.error(error_msg)
                raise ValueError(error_msg)
            grouped.setdefault(section, {})[name] = value
        elif key in SCALARS:
            scalars[key] = value
        else:
            error_msg = f"未知配置项: {key}"
            logger.error(error_msg)
            raise ValueError(error_msg)
    updated = replace(config, **scalars)
    for section, values in grouped.items():
        updated = replace(updated, **{section: _update_section(getattr(updated, section), values, section)})
    return updated


def config_from_dict(data: Dict[str, Any], defaults: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    以 data["preset"]（缺省 desk）为起点，先套用 defaults（如环境变量给出的种子），再逐节覆盖
    """
    config = apply_overrides(preset_config(data.get("preset", "desk")), defaults or {})
    overrides: Dict[str, Any] = {}
    for key, value in data.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                error_msg = f"配置节 {key} 必须是对象"
                logger.error(error_msg)
                raise ValueError(error_msg)
            overrides.update({f"{key}.{name}": item for name, item in value.items()})
        elif key != "preset":
            overrides[key] = value
    return apply_overrides(config, overrides)


def load_run_config(
    path: Optional[str],
    overrides: Optional[Dict[str, Any]] = None,
    defaults: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    预设 → 进程级缺省 → JSON 文件 → 覆盖项，返回已校验的配置

    Raises:
        FileNotFoundError: 配置文件不存在
        ValueError: JSON 解析失败或字段非法
    """
    data: Dict[str, Any] = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except FileNotFoundError:
            logger.error(f"配置文件不存在: {path}")
            raise
        except json.JSONDecodeError as e:
            error_msg = f"配置文件 JSON 解析失败: {path}: {e}"
            logger.error(error_msg)
            raise ValueError(error_msg) from e
    overrides = dict(overrides or {})
    if overrides.get("preset"):
        data["preset"] = overrides.pop("preset")
    config = apply_overrides(config_from_dict(data, defaults), overrides)
    config.validate()
    return config
