import json
import os
import time
from typing import Any, Dict, List

from src.logging.logger_config import logger


class MetricsWriter:
    """JSON-lines 指标日志，每条记录一行，写后立即落盘"""

    def __init__(self, path: str) -> None:
        """
        Args:
            path: 日志文件路径，已存在时追加
        """
        self.path = path
        self.logger = logger
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)

    def write(self, record: Dict[str, Any]) -> None:
        payload = {"time": round(time.time(), 3), **record}
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(payload, ensure_ascii=False, sort_keys=True) + "\n")
        self.logger.debug(f"指标已记录: {record.get('event', 'record')}")


def read_metrics(path: str) -> List[Dict[str, Any]]:
    """
    Raises:
        FileNotFoundError: 日志文件不存在
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"指标日志不存在: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]
