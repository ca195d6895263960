from typing import Sequence

from src import __version__
from src.command.executor import CommandExecutor
from src.config.manager import ConfigManager
from src.logging.logger_config import logger
from src.platform.compatibility import PlatformChecker


class CatoApp:
    """命令行应用主类，整合环境检查、配置加载与命令执行"""

    VERSION = __version__

    def __init__(self) -> None:
        self.config_manager = ConfigManager()
        self.config_manager.load_config()
        logger.info(f"CATO 基准 版本 {self.VERSION} 启动中...")

        self.platform_checker = PlatformChecker()
        self.platform_checker.check_compatibility()

        self.config_manager.make_output_dir()
        self.command_executor = CommandExecutor(self.config_manager)

    def run(self, argv: Sequence[str]) -> int:
        """
        Args:
            argv: 不含程序名的命令行参数

        Returns:
            int: 进程退出码
        """
        return self.command_executor.execute_command(argv)
