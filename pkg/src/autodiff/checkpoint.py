"""
CATO1 张量记录文件

布局: 魔数 b"CATO1"，随后逐条记录:
名称长度 (u64 LE)、UTF-8 名称、维数 (u64 LE)、各维长度 (u64 LE)、数据 (f64 LE)。
模型检查点与数据集字段文件共用此格式。
"""

import os
import struct
from typing import Dict

import numpy as np

from src.errors import CheckpointError
from src.logging.logger_config import logger

MAGIC = b"CATO1"
_U64 = struct.Struct("<Q")


def encode_records(records: Dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC]
    for name, value in records.items():
        array = np.ascontiguousarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(_U64.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U64.pack(array.ndim))
        chunks.extend(_U64.pack(dim) for dim in array.shape)
        chunks.append(array.tobytes(order="C"))
    return b"".join(chunks)


def decode_records(payload: bytes) -> Dict[str, np.ndarray]:
    """
    解析 CATO1 字节串

    Raises:
        CheckpointError: 魔数错误或记录被截断
    """
    if not payload.startswith(MAGIC):
        error_msg = "文件不是 CATO1 格式（魔数不匹配）"
        logger.error(error_msg)
        raise CheckpointError(error_msg)
    records: Dict[str, np.ndarray] = {}
    offset = len(MAGIC)
    try:
        while offset < len(payload):
            (name_len,) = _U64.unpack_from(payload, offset)
            offset += _U64.size
            name = payload[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = _U64.unpack_from(payload, offset)
            offset += _U64.size
            dims = []
            for _ in range(rank):
                (dim,) = _U64.unpack_from(payload, offset)
                dims.append(dim)
                offset += _U64.size
            count = int(np.prod(dims)) if dims else 1
            nbytes = count * 8
            if offset + nbytes > len(payload):
                raise struct.error("数据段被截断")
            array = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
            records[name] = array.reshape(dims).astype(np.float64)
            offset += nbytes
    except (struct.error, UnicodeDecodeError) as e:
        error_msg = f"CATO1 记录解析失败: {e}"
        logger.error(error_msg)
        raise CheckpointError(error_msg) from e
    return records


def save_records(path: str, records: Dict[str, np.ndarray]) -> None:
    """先写临时文件再原子替换"""
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as handle:
        handle.write(encode_records(records))
    os.replace(tmp_path, path)
    logger.debug(f"已写入 {len(records)} 条记录: {path}")


def load_records(path: str) -> Dict[str, np.ndarray]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"文件不存在: {path}")
    with open(path, "rb") as handle:
        return decode_records(handle.read())
