"""日志配置模块：进程级控制台/滚动文件输出，以及单次运行目录内的命令日志"""

import os
import sys
from contextlib import contextmanager
from datetime import datetime, timedelta, timezone
from typing import Any, Iterator

from loguru import logger as loguru_logger

CST = timezone(timedelta(hours=8))
LOG_FORMAT = "{extra[cst]} CST - {name} - {level} - {message}"


def _stamp_cst(record: Any) -> None:
    """把记录时间换算为东八区并写入 extra，格式串里直接引用"""
    record["extra"]["cst"] = record["time"].astimezone(CST).strftime("%Y-%m-%d %H:%M:%S")


class LoggerConfig:
    """日志配置类，级别与目录取自 CATO_LOG_LEVEL / CATO_LOG_DIR"""

    DEFAULT_LEVEL: str = "INFO"
    DEFAULT_LOG_DIR: str = "logs"

    def __init__(self) -> None:
        self.level: str = os.getenv("CATO_LOG_LEVEL", self.DEFAULT_LEVEL).upper()
        self.log_dir: str = os.getenv("CATO_LOG_DIR", self.DEFAULT_LOG_DIR)

    def setup_logger(self) -> Any:
        """
        重新配置 loguru：控制台走 stderr（stdout 留给结果摘要），
        文件固定记录 DEBUG，按天轮转，保留 7 天

        Returns:
            配置后的 logger 实例
        """
        loguru_logger.remove()
        loguru_logger.configure(patcher=_stamp_cst)

        os.makedirs(self.log_dir, exist_ok=True)
        log_file = os.path.join(self.log_dir, f"{datetime.now(CST):%Y-%m-%d}.log")

        loguru_logger.add(sys.stderr, level=self.level, format=LOG_FORMAT, colorize=False)
        loguru_logger.add(
            log_file,
            level="DEBUG",
            format=LOG_FORMAT,
            encoding="utf-8",
            rotation="00:00",
            retention="7 days",
        )
        return loguru_logger


@contextmanager
def run_log(directory: str, name: str) -> Iterator[str]:
    """
    命令执行期间把 INFO 及以上日志额外写入 <directory>/<name>.log，与检查点放在一起

    Yields:
        str: 日志文件路径
    """
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{name}.log")
    sink_id = loguru_logger.add(path, level="INFO", format=LOG_FORMAT, encoding="utf-8", enqueue=False)
    try:
        yield path
    finally:
        loguru_logger.remove(sink_id)


logger = LoggerConfig().setup_logger()
