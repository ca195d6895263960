"""
CATP 点云样本文件

布局: 魔数 b"CATP"、点数 N (u64 LE)、特征维数 d_f (u64 LE)，
随后 coords (N×2) 与 feats (N×d_f)，均为 f64 LE 行主序。
"""

import os
import struct

import numpy as np

from src.errors import CheckpointError
from src.logging.logger_config import logger
from src.pointcloud.knn import PointCloud

MAGIC = b"CATP"
_HEADER = struct.Struct("<4sQQ")


def encode_point_cloud(pc: PointCloud) -> bytes:
    chunks = [_HEADER.pack(MAGIC, pc.size, pc.feature_dim)]
    chunks.append(np.ascontiguousarray(pc.coords, dtype="<f8").tobytes())
    if pc.feats is not None:
        chunks.append(np.ascontiguousarray(pc.feats, dtype="<f8").tobytes())
    return b"".join(chunks)


def decode_point_cloud(payload: bytes) -> PointCloud:
    """
    Raises:
        CheckpointError: 魔数错误或长度与头部不符
    """
    if len(payload) < _HEADER.size:
        error_msg = "CATP 文件过短，缺少头部"
        logger.error(error_msg)
        raise CheckpointError(error_msg)
    magic, count, feature_dim = _HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        error_msg = f"文件不是 CATP 格式（魔数 {magic!r}）"
        logger.error(error_msg)
        raise CheckpointError(error_msg)
    expected = _HEADER.size + 8 * count * (2 + feature_dim)
    if len(payload) != expected:
        error_msg = f"CATP 文件长度 {len(payload)} 与头部声明的 {expected} 不一致"
        logger.error(error_msg)
        raise CheckpointError(error_msg)
    offset = _HEADER.size
    coords = np.frombuffer(payload, dtype="<f8", count=2 * count, offset=offset).reshape(count, 2)
    offset += 16 * count
    feats = None
    if feature_dim:
        feats = np.frombuffer(payload, dtype="<f8", count=count * feature_dim, offset=offset)
        feats = feats.reshape(count, feature_dim).astype(np.float64)
    return PointCloud(coords.astype(np.float64), feats)


def write_point_cloud(path: str, pc: PointCloud) -> None:
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as handle:
        handle.write(encode_point_cloud(pc))
    os.replace(tmp_path, path)
    logger.debug(f"已写入点云 ({pc.size} 点, d_f={pc.feature_dim}): {path}")


def read_point_cloud(path: str) -> PointCloud:
    if not os.path.exists(path):
        raise FileNotFoundError(f"点云文件不存在: {path}")
    with open(path, "rb") as handle:
        return decode_point_cloud(handle.read())
