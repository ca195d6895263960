from src.pointcloud.knn import KnnGraph, PointCloud, build_knn, square_distance
from src.pointcloud.model import (
    PcBlock,
    PcConfig,
    PcGlobalAttention,
    PcLocal,
    PcModelState,
    canonical_order,
    edge_geometry,
    load_pc_model,
    pc_block_forward,
    pc_chart,
    pc_local_forward,
    pc_model_forward,
    save_pc_model,
)
from src.pointcloud.io import read_point_cloud, write_point_cloud

__all__ = [
    "KnnGraph",
    "PointCloud",
    "build_knn",
    "square_distance",
    "PcBlock",
    "PcConfig",
    "PcGlobalAttention",
    "PcLocal",
    "PcModelState",
    "canonical_order",
    "edge_geometry",
    "load_pc_model",
    "pc_block_forward",
    "pc_chart",
    "pc_local_forward",
    "pc_model_forward",
    "save_pc_model",
    "read_point_cloud",
    "write_point_cloud",
]
