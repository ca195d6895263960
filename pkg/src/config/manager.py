"""配置管理器模块，负责从 .env 与环境变量加载进程级配置"""

import os
from typing import Dict, Union

from dotenv import load_dotenv

from src.logging.logger_config import LoggerConfig, logger

ConfigValue = Union[str, int, bool]


class ConfigManager:
    """进程级配置：日志级别与目录、输出目录、默认种子与工作线程数"""

    def __init__(self) -> None:
        self.logger = logger
        self.config_dict: Dict[str, ConfigValue] = {}

    def load_config(self) -> None:
        """加载 .env 到环境变量，再读取 CATO_* 配置项；日志系统按新级别重新配置"""
        load_dotenv()
        LoggerConfig().setup_logger()

        output_dir = os.getenv("CATO_OUTPUT_DIR", "./runs")
        # 处理 ~ 路径并转为绝对路径
        if output_dir.startswith("~"):
            output_dir = os.path.expanduser(output_dir)

        self.config_dict = {
            "CATO_LOG_LEVEL": os.getenv("CATO_LOG_LEVEL", LoggerConfig.DEFAULT_LEVEL).upper(),
            "CATO_LOG_DIR": os.getenv("CATO_LOG_DIR", LoggerConfig.DEFAULT_LOG_DIR),
            "CATO_OUTPUT_DIR": os.path.abspath(output_dir),
            "CATO_SEED": self._parse_int("CATO_SEED", 0, minimum=0),
            "CATO_NUM_WORKERS": self._parse_int("CATO_NUM_WORKERS", 1, minimum=1),
        }
        self.logger.info(
            f"配置加载完成 - 输出目录: {self.config_dict['CATO_OUTPUT_DIR']}, "
            f"种子: {self.config_dict['CATO_SEED']}, 工作线程: {self.config_dict['CATO_NUM_WORKERS']}"
        )

    def _parse_int(self, key: str, default: int, minimum: int) -> int:
        """
        读取整数环境变量，非法或小于 minimum 时回退到默认值
        """
        raw = os.getenv(key, str(default))
        try:
            value = int(raw)
        except ValueError:
            self.logger.warning(f"环境变量 {key}={raw!r} 不是整数，使用默认值 {default}")
            return default
        if value < minimum:
            self.logger.warning(f"环境变量 {key}={value} 小于 {minimum}，使用默认值 {default}")
            return default
        return value

    def make_output_dir(self) -> str:
        output_dir = str(self.config_dict["CATO_OUTPUT_DIR"])
        os.makedirs(output_dir, exist_ok=True)
        self.logger.info(f"输出目录设置为: {output_dir}")
        return output_dir

    def get(self, key: str, default: ConfigValue = "") -> ConfigValue:
        return self.config_dict.get(key, default)

    def set(self, key: str, value: ConfigValue) -> None:
        self.config_dict[key] = value
