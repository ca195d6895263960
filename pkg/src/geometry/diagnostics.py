"""坐标图诊断：主成分方差占比、参与率有效维度、CSV 与散点图导出"""

import csv
import os
from dataclasses import dataclass
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.errors import ShapeError  # noqa: E402
from src.logging.logger_config import logger  # noqa: E402


@dataclass
class ChartSpectrum:
    explained_variance_ratio: List[float]
    effective_dimension: float

    def to_dict(self) -> dict:
        return {
            "explained_variance_ratio": self.explained_variance_ratio,
            "effective_dimension": self.effective_dimension,
        }


def _flatten_pairs(values: np.ndarray, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != 2:
        error_msg = f"{name} 最后一维必须为 2，实际 {values.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    return values.reshape(-1, 2)


def chart_spectrum(zeta: np.ndarray) -> ChartSpectrum:
    """
    对所有节点的 ζ 做主成分分析

    参与率有效维度 (Σλ)² / Σλ²，介于 1（塌缩为一维）与 2 之间。
    """
    points = _flatten_pairs(zeta, "坐标图")
    centered = points - points.mean(axis=0)
    eigenvalues = np.sort(np.linalg.eigvalsh(centered.T @ centered / max(len(points) - 1, 1)))[::-1]
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    total = float(eigenvalues.sum())
    if total == 0.0:
        return ChartSpectrum([0.0, 0.0], 0.0)
    ratio = (eigenvalues / total).tolist()
    dimension = total**2 / float(np.sum(eigenvalues**2))
    return ChartSpectrum(ratio, dimension)


def write_chart_csv(path: str, coords: np.ndarray, zeta: np.ndarray) -> None:
    """逐节点写出 x, y, xi, eta"""
    xy = _flatten_pairs(coords, "坐标")
    chart = _flatten_pairs(zeta, "坐标图")
    if len(xy) != len(chart):
        raise ShapeError(f"坐标节点数 {len(xy)} 与坐标图节点数 {len(chart)} 不一致")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y", "xi", "eta"])
        writer.writerows(np.concatenate([xy, chart], axis=1).tolist())
    logger.info(f"坐标图 CSV 已写入: {path}")


def plot_chart(path: str, coords: np.ndarray, zeta: np.ndarray) -> None:
    """左图为物理网格，右图为坐标图空间，颜色为 ξ"""
    xy = _flatten_pairs(coords, "坐标")
    chart = _flatten_pairs(zeta, "坐标图")
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    axes[0].scatter(xy[:, 0], xy[:, 1], c=chart[:, 0], s=4, cmap="viridis")
    axes[0].set_title("physical mesh")
    axes[1].scatter(chart[:, 0], chart[:, 1], c=chart[:, 0], s=4, cmap="viridis")
    axes[1].set_title("chart space")
    for axis in axes:
        axis.set_aspect("equal")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    logger.info(f"坐标图散点图已写入: {path}")
