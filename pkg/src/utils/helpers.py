import json
import os
from typing import Any

from src.logging.logger_config import logger

TEMP_SUFFIXES = (".tmp", ".temp")


def write_json(path: str, data: Any) -> None:
    """先写临时文件再替换，读者不会看到半个 JSON 文件"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, ensure_ascii=False, indent=2, sort_keys=True)
    os.replace(tmp_path, path)
    logger.debug(f"JSON 已写入: {path}")


def cleanup_temp_files(root: str) -> int:
    """
    清理目录树中中断写入遗留的临时文件

    Args:
        root: 目录路径

    Returns:
        清理的文件数量

    Raises:
        FileNotFoundError: 当目录不存在时
    """
    if not os.path.isdir(root):
        raise FileNotFoundError(f"目录不存在: {root}")

    cleaned_count = 0
    for directory, _, files in os.walk(root):
        for name in files:
            if name.endswith(TEMP_SUFFIXES):
                path = os.path.join(directory, name)
                logger.info(f"清理临时文件: {path}")
                os.remove(path)
                cleaned_count += 1

    if cleaned_count:
        logger.info(f"临时文件清理完成，共清理 {cleaned_count} 个文件")
    return cleaned_count


def get_file_size_mb(path: str) -> float:
    """
    Raises:
        FileNotFoundError: 文件不存在
    """
    return round(os.path.getsize(path) / (1024 * 1024), 2)
