from src.data.generator import (
    MAX_SAFE_AMPLITUDE,
    SOURCE_MODES,
    DataConfig,
    SyntheticSample,
    distort_mesh,
    gen_coefficient,
    gen_source,
    generate_sample,
    jacobian_determinant,
    point_subset,
    sample_seed,
    solve_darcy,
)
from src.data.loader import BatchPrefetcher, parallel_map
from src.data.dataset import (
    SplitArrays,
    file_sha256,
    load_point_clouds,
    load_split,
    manifest_digest,
    normalizer_stats,
    read_manifest,
    write_dataset,
)

__all__ = [
    "MAX_SAFE_AMPLITUDE",
    "SOURCE_MODES",
    "DataConfig",
    "SyntheticSample",
    "distort_mesh",
    "gen_coefficient",
    "gen_source",
    "generate_sample",
    "jacobian_determinant",
    "point_subset",
    "sample_seed",
    "solve_darcy",
    "BatchPrefetcher",
    "parallel_map",
    "SplitArrays",
    "file_sha256",
    "load_point_clouds",
    "load_split",
    "manifest_digest",
    "normalizer_stats",
    "read_manifest",
    "write_dataset",
]
