import json
import math

import numpy as np
import pytest

from src.data import (
    BatchPrefetcher,
    DataConfig,
    SplitArrays,
    distort_mesh,
    gen_coefficient,
    gen_source,
    generate_sample,
    jacobian_determinant,
    load_point_clouds,
    load_split,
    manifest_digest,
    normalizer_stats,
    parallel_map,
    point_subset,
    read_manifest,
    sample_seed,
    solve_darcy,
    write_dataset,
)
from src.autodiff.rng import make_rng
from src.errors import FoldOverError, ShapeError
from src.physics.mesh import uniform_mesh

SMALL_DATA = DataConfig(resolution=9, train_samples=3, test_samples=2, contrast=5.0, seed=7)


def test_unit_contrast_gives_constant_coefficient():
    np.testing.assert_array_equal(gen_coefficient(3, 6, 6, 1.0), np.ones((6, 6)))


def test_coefficient_range_and_determinism():
    for seed in range(10):
        a = gen_coefficient(seed, 16, 16, 12.0)
        assert a.min() == pytest.approx(1.0)
        assert a.max() == pytest.approx(12.0)
    np.testing.assert_array_equal(gen_coefficient(4, 8, 8, 3.0), gen_coefficient(4, 8, 8, 3.0))
    assert not np.array_equal(gen_coefficient(4, 8, 8, 3.0), gen_coefficient(5, 8, 8, 3.0))
    with pytest.raises(ValueError):
        gen_coefficient(0, 4, 4, 0.5)


def test_source_modes():
    mesh = uniform_mesh(5, 5)
    np.testing.assert_array_equal(gen_source("constant", mesh), np.ones((5, 5)))
    random_source = gen_source("random", mesh, seed=3)
    assert random_source.min() >= 0.5 - 1e-12 and random_source.max() <= 1.5 + 1e-12
    with pytest.raises(ValueError):
        gen_source("gaussian", mesh)


def test_manufactured_solution_converges_quadratically():
    errors = []
    for size in (17, 33, 65):
        mesh = uniform_mesh(size, size)
        u = solve_darcy(np.ones((size, size)), mesh, gen_source("manufactured", mesh))
        x, y = mesh.coords[..., 0], mesh.coords[..., 1]
        errors.append(np.max(np.abs(u - np.sin(math.pi * x) * np.sin(math.pi * y))))
    slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(np.abs(slopes - 2.0) < 0.3), slopes


def test_zero_source_gives_zero_solution():
    mesh = uniform_mesh(8, 8)
    u = solve_darcy(gen_coefficient(1, 8, 8, 4.0), mesh, np.zeros((8, 8)))
    assert np.all(u == 0.0)


def test_symmetric_problem_has_symmetric_solution():
    mesh = uniform_mesh(15, 15)
    u = solve_darcy(np.ones((15, 15)), mesh, np.ones((15, 15)))
    np.testing.assert_allclose(u, u[::-1, :], atol=1e-8)
    np.testing.assert_allclose(u, u[:, ::-1], atol=1e-8)
    np.testing.assert_allclose(u, u.T, atol=1e-8)
    assert np.all(u[0] == 0.0) and np.all(u[:, -1] == 0.0)
    assert np.all(u[1:-1, 1:-1] > 0.0)


def test_solver_input_errors():
    mesh = uniform_mesh(5, 5)
    with pytest.raises(ShapeError):
        solve_darcy(np.ones((4, 5)), mesh, np.ones((5, 5)))
    with pytest.raises(ValueError):
        solve_darcy(-np.ones((5, 5)), mesh, np.ones((5, 5)))


def test_distortion_keeps_boundary_and_detects_fold_over():
    mesh = distort_mesh(17, 17, 0.08)
    reference = uniform_mesh(17, 17).coords
    for edge in (np.s_[0], np.s_[-1], np.s_[:, 0], np.s_[:, -1]):
        np.testing.assert_allclose(mesh.coords[edge], reference[edge], atol=1e-15)
    assert jacobian_determinant(17, 17, 0.08).min() > 0.0
    assert distort_mesh(5, 5, 0.0).coords.tolist() == uniform_mesh(5, 5).coords.tolist()
    with pytest.raises(FoldOverError):
        distort_mesh(33, 33, 0.5)


def test_samples_are_reproducible_by_index():
    config = DataConfig(resolution=8, contrast=4.0, source="random", amplitude=0.05, seed=2)
    first = generate_sample(config, 3)
    again = generate_sample(config, 3)
    for name, value in first.fields().items():
        np.testing.assert_array_equal(value, again.fields()[name])
    assert first.metadata["seed"] == sample_seed(2, 3)
    assert not np.array_equal(first.feats, generate_sample(config, 4).feats)


def test_point_subset_is_seeded_and_bounded():
    sample = generate_sample(DataConfig(resolution=6), 0)
    nodes = point_subset(sample, 10, seed=1)
    assert len(set(nodes.tolist())) == 10
    np.testing.assert_array_equal(nodes, point_subset(sample, 10, seed=1))
    with pytest.raises(ValueError):
        point_subset(sample, 37, seed=1)


def test_data_config_validation():
    with pytest.raises(ValueError):
        DataConfig(resolution=2).validate()
    with pytest.raises(ValueError):
        DataConfig(source="sine").validate()
    with pytest.raises(ValueError):
        DataConfig(resolution=4, pc_points=17).validate()


def test_dataset_directory_roundtrip(tmp_path):
    root = str(tmp_path / "darcy")
    manifest = write_dataset(root, SMALL_DATA, workers=2)
    assert read_manifest(root) == json.loads(json.dumps(manifest))
    train = load_split(root, "train")
    assert len(train) == 3
    assert train.coords.shape == (3, 9, 9, 2)
    assert train.feats.shape == (3, 9, 9, 1)
    expected = generate_sample(SMALL_DATA, 1)
    np.testing.assert_array_equal(train.target[1], expected.target)
    test = load_split(root, "test", limit=1)
    np.testing.assert_array_equal(test.feats[0, ..., 0], generate_sample(SMALL_DATA, 3).feats)
    with pytest.raises(KeyError):
        load_split(root, "validation")


def test_dataset_is_identical_across_worker_counts(tmp_path):
    first, second = str(tmp_path / "a"), str(tmp_path / "b")
    write_dataset(first, SMALL_DATA, workers=1)
    write_dataset(second, SMALL_DATA, workers=3)
    assert manifest_digest(first) == manifest_digest(second)


def test_dataset_point_clouds(tmp_path):
    root = str(tmp_path / "pc")
    config = DataConfig(resolution=6, train_samples=2, test_samples=1, pc_points=20, seed=1)
    write_dataset(root, config)
    clouds = load_point_clouds(root, "train")
    assert len(clouds) == 2
    cloud, target = clouds[0]
    assert cloud.size == 20 and cloud.feature_dim == 1
    assert target.shape == (20, 1)

    bare = str(tmp_path / "bare")
    write_dataset(bare, DataConfig(resolution=5, train_samples=1, test_samples=0))
    with pytest.raises(ValueError):
        load_point_clouds(bare, "train")


def test_dataset_directory_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_manifest(str(tmp_path))
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    with pytest.raises(NotADirectoryError):
        write_dataset(str(blocker), SMALL_DATA)
    with pytest.raises(FileNotFoundError):
        write_dataset(str(tmp_path / "missing" / "root"), SMALL_DATA)


def test_normalizer_stats():
    arrays = SplitArrays(np.zeros((2, 3, 3, 2)), np.full((2, 3, 3, 1), 4.0), np.arange(18.0).reshape(2, 3, 3))
    stats = normalizer_stats(arrays)
    np.testing.assert_array_equal(stats["feat_std"], [1.0])
    assert stats["target_mean"][0] == pytest.approx(8.5)


def test_parallel_map_preserves_order_and_errors():
    assert parallel_map(lambda x: x * x, list(range(20)), workers=4) == [x * x for x in range(20)]

    def failing(x):
        if x in (3, 7):
            raise RuntimeError(f"bad {x}")
        return x

    with pytest.raises(RuntimeError, match="bad 3"):
        parallel_map(failing, list(range(10)), workers=3)


def test_prefetcher_batches_in_shuffled_order():
    arrays = {"x": np.arange(10.0), "y": np.arange(10.0) * 2}
    loader = BatchPrefetcher(arrays, batch_size=4, rng=make_rng(0, stream=20))
    batches = list(loader)
    assert len(loader) == 3
    assert [len(batch["x"]) for batch in batches] == [4, 4, 2]
    seen = np.concatenate([batch["x"] for batch in batches])
    assert sorted(seen.tolist()) == list(range(10))
    np.testing.assert_array_equal(np.concatenate([batch["y"] for batch in batches]), seen * 2)
    np.testing.assert_array_equal(seen, make_rng(0, stream=20).permutation(10))
    with pytest.raises(ValueError):
        BatchPrefetcher({"x": np.zeros(3), "y": np.zeros(4)}, batch_size=2)


def test_prefetcher_close_releases_thread():
    loader = BatchPrefetcher({"x": np.arange(100.0)}, batch_size=1, prefetch=1)
    next(iter(loader))
    loader.close()
    assert not loader._thread.is_alive()
