"""点云与物理空间 K 近邻图"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.errors import ShapeError
from src.logging.logger_config import logger


@dataclass
class PointCloud:
    """无序点集：coords (N, 2)，feats (N, d_f) 可选"""

    coords: np.ndarray
    feats: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            error_msg = f"点云坐标必须为 (N, 2)，实际 {self.coords.shape}"
            logger.error(error_msg)
            raise ShapeError(error_msg)
        if self.feats is not None:
            self.feats = np.asarray(self.feats, dtype=np.float64)
            if self.feats.ndim == 1:
                self.feats = self.feats[:, None]
            if self.feats.shape[0] != self.size:
                error_msg = f"点云特征行数 {self.feats.shape[0]} 与点数 {self.size} 不一致"
                logger.error(error_msg)
                raise ShapeError(error_msg)

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def feature_dim(self) -> int:
        return 0 if self.feats is None else self.feats.shape[1]

    def permuted(self, order: np.ndarray) -> "PointCloud":
        return PointCloud(self.coords[order], None if self.feats is None else self.feats[order])


@dataclass
class KnnGraph:
    """neighbors (N, K)：每行 K 个互不相同且不含自身的邻居，按距离升序、同距按编号升序"""

    neighbors: np.ndarray
    distances: np.ndarray

    @property
    def degree(self) -> int:
        return self.neighbors.shape[1]


def square_distance(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """逐对平方欧氏距离，形状 (N, M)"""
    diff = src[:, None, :] - dst[None, :, :]
    return np.sum(diff * diff, axis=-1)


def build_knn(pc: PointCloud, k: int) -> KnnGraph:
    """
    全量两两距离 + 稳定排序的精确 K 近邻

    Raises:
        ValueError: K ≥ N 或 K < 1
    """
    if k < 1 or k >= pc.size:
        error_msg = f"K 近邻数必须满足 1 ≤ K < N，实际 K={k}, N={pc.size}"
        logger.error(error_msg)
        raise ValueError(error_msg)
    dist = square_distance(pc.coords, pc.coords)
    np.fill_diagonal(dist, np.inf)
    neighbors = np.argsort(dist, axis=1, kind="stable")[:, :k]
    distances = np.sqrt(np.take_along_axis(dist, neighbors, axis=1))
    return KnnGraph(neighbors=neighbors, distances=distances)
