"""
数据集目录读写

目录布局::

    <root>/train/00000/{coords,feats,target,source}.cato1
    <root>/test/00000/...
    <root>/pc/{train,test}/00000.catp 与 00000.target.cato1   （pc_points > 0 时）
    <root>/manifest.json                                      （最后写入，作为完成标记）
"""

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.autodiff.checkpoint import load_records, save_records
from src.data.generator import DataConfig, SyntheticSample, generate_sample, point_subset
from src.data.loader import parallel_map
from src.logging.logger_config import logger
from src.pointcloud.io import read_point_cloud, write_point_cloud
from src.pointcloud.knn import PointCloud

MANIFEST_NAME = "manifest.json"
FIELD_SUFFIX = ".cato1"
SPLITS = ("train", "test")


@dataclass
class SplitArrays:
    """一个划分的堆叠数组：coords (n,H,W,2)，feats (n,H,W,1)，target (n,H,W)"""

    coords: np.ndarray
    feats: np.ndarray
    target: np.ndarray

    def __len__(self) -> int:
        return self.coords.shape[0]

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {"coords": self.coords, "feats": self.feats, "target": self.target}


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _prepare_root(root: str) -> None:
    if os.path.exists(root) and not os.path.isdir(root):
        error_msg = f"输出路径已存在且不是目录: {root}"
        logger.error(error_msg)
        raise NotADirectoryError(error_msg)
    parent = os.path.dirname(os.path.abspath(root))
    if not os.path.isdir(parent):
        error_msg = f"输出目录的上级目录不存在: {parent}"
        logger.error(error_msg)
        raise FileNotFoundError(error_msg)
    if os.path.exists(os.path.join(root, MANIFEST_NAME)):
        os.remove(os.path.join(root, MANIFEST_NAME))
        logger.warning(f"目录中已有数据集，旧清单已移除，将重新生成: {root}")
    os.makedirs(root, exist_ok=True)


def _write_sample(root: str, split: str, position: int, sample: SyntheticSample) -> Dict:
    relative_dir = os.path.join(split, f"{position:05d}")
    os.makedirs(os.path.join(root, relative_dir), exist_ok=True)
    files = {}
    for name, value in sample.fields().items():
        relative = os.path.join(relative_dir, name + FIELD_SUFFIX)
        save_records(os.path.join(root, relative), {name: value})
        files[name] = relative
    return {"files": files, **sample.metadata}


def _write_point_cloud(root: str, split: str, position: int, sample: SyntheticSample, count: int) -> Dict:
    nodes = point_subset(sample, count, int(sample.metadata["seed"]))
    coords = sample.mesh.coords.reshape(-1, 2)[nodes]
    feats = sample.feats.reshape(-1, 1)[nodes]
    target = sample.target.reshape(-1, 1)[nodes]
    relative_dir = os.path.join("pc", split)
    os.makedirs(os.path.join(root, relative_dir), exist_ok=True)
    cloud_path = os.path.join(relative_dir, f"{position:05d}.catp")
    target_path = os.path.join(relative_dir, f"{position:05d}.target{FIELD_SUFFIX}")
    write_point_cloud(os.path.join(root, cloud_path), PointCloud(coords, feats))
    save_records(os.path.join(root, target_path), {"target": target})
    return {"cloud": cloud_path, "target": target_path}


def write_dataset(root: str, config: DataConfig, workers: int = 1) -> Dict:
    """
    生成并写出整个数据集；样本并行生成、按编号顺序串行写入，清单最后写入

    Args:
        root: 输出目录
        config: 数据配置
        workers: 生成线程数

    Returns:
        清单字典

    Raises:
        ValueError: 配置非法
        NotADirectoryError / FileNotFoundError: 输出路径不可用
        SolverError: 某个样本求解失败
    """
    config.validate()
    _prepare_root(root)
    counts = {"train": config.train_samples, "test": config.test_samples}
    manifest: Dict = {"format": "CATO1", "config": config.to_dict(), "splits": {}, "sha256": {}}
    offset = 0
    for split in SPLITS:
        indices = list(range(offset, offset + counts[split]))
        offset += counts[split]
        logger.info(f"生成 {split} 划分: {len(indices)} 个样本（{workers} 个线程）")
        samples = parallel_map(lambda index: generate_sample(config, index), indices, workers)
        entries = []
        for position, sample in enumerate(samples):
            entry = _write_sample(root, split, position, sample)
            if config.pc_points:
                entry["pc"] = _write_point_cloud(root, split, position, sample, config.pc_points)
            entries.append(entry)
        manifest["splits"][split] = entries

    for entries in manifest["splits"].values():
        for entry in entries:
            paths = list(entry["files"].values()) + list(entry.get("pc", {}).values())
            for relative in paths:
                manifest["sha256"][relative] = file_sha256(os.path.join(root, relative))
    manifest_path = os.path.join(root, MANIFEST_NAME)
    with open(f"{manifest_path}.tmp", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, ensure_ascii=False, indent=2, sort_keys=True)
    os.replace(f"{manifest_path}.tmp", manifest_path)
    logger.info(f"数据集已写入 {root}: train={counts['train']}, test={counts['test']}")
    return manifest


def read_manifest(root: str) -> Dict:
    """
    Raises:
        FileNotFoundError: 清单不存在（数据集未生成或生成中断）
    """
    path = os.path.join(root, MANIFEST_NAME)
    if not os.path.exists(path):
        error_msg = f"数据集清单不存在，数据集不完整: {path}"
        logger.error(error_msg)
        raise FileNotFoundError(error_msg)
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def manifest_digest(root: str) -> str:
    return file_sha256(os.path.join(root, MANIFEST_NAME))


def load_split(root: str, split: str, limit: Optional[int] = None) -> SplitArrays:
    """
    Raises:
        KeyError: 清单中没有该划分
    """
    manifest = read_manifest(root)
    if split not in manifest["splits"]:
        error_msg = f"数据集中没有划分 {split}，可用划分: {sorted(manifest['splits'])}"
        logger.error(error_msg)
        raise KeyError(error_msg)
    entries = manifest["splits"][split][:limit]
    coords, feats, target = [], [], []
    for entry in entries:
        files = entry["files"]
        coords.append(load_records(os.path.join(root, files["coords"]))["coords"])
        feats.append(load_records(os.path.join(root, files["feats"]))["feats"][..., None])
        target.append(load_records(os.path.join(root, files["target"]))["target"])
    resolution = manifest["config"]["resolution"]
    if not entries:
        return SplitArrays(
            np.zeros((0, resolution, resolution, 2)),
            np.zeros((0, resolution, resolution, 1)),
            np.zeros((0, resolution, resolution)),
        )
    return SplitArrays(np.stack(coords), np.stack(feats), np.stack(target))


def load_point_clouds(root: str, split: str, limit: Optional[int] = None) -> List[Tuple[PointCloud, np.ndarray]]:
    """
    Raises:
        ValueError: 数据集生成时未导出点云
    """
    manifest = read_manifest(root)
    entries = manifest["splits"].get(split, [])[:limit]
    if entries and "pc" not in entries[0]:
        error_msg = "数据集未导出点云样本（生成时 pc_points=0）"
        logger.error(error_msg)
        raise ValueError(error_msg)
    result = []
    for entry in entries:
        cloud = read_point_cloud(os.path.join(root, entry["pc"]["cloud"]))
        target = load_records(os.path.join(root, entry["pc"]["target"]))["target"]
        result.append((cloud, target))
    return result


def normalizer_stats(arrays: SplitArrays) -> Dict[str, np.ndarray]:
    """训练划分上的特征与目标标准化统计量"""
    feat_std = arrays.feats.std(axis=(0, 1, 2))
    target_std = arrays.target.std()
    return {
        "feat_mean": arrays.feats.mean(axis=(0, 1, 2)),
        "feat_std": np.where(feat_std > 0.0, feat_std, 1.0),
        "target_mean": np.array([arrays.target.mean()]),
        "target_std": np.array([target_std if target_std > 0.0 else 1.0]),
    }
