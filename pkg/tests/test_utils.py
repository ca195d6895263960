import json

import pytest

from src.logging import logger, run_log
from src.platform import PlatformChecker
from src.utils import cleanup_temp_files, format_summary, get_file_size_mb, parse_int_list, write_json


def test_parse_int_list():
    assert parse_int_list("16,32,64") == [16, 32, 64]
    assert parse_int_list("8， 16 32") == [8, 16, 32]
    with pytest.raises(ValueError):
        parse_int_list("  ")
    with pytest.raises(ValueError):
        parse_int_list("8,x")
    with pytest.raises(ValueError):
        parse_int_list("1,4", minimum=2)


def test_format_summary_skips_containers():
    text = format_summary("eval", {"mean_rel_l2": 0.125, "steps": 4, "per_sample": [0.1, 0.2]})
    assert text.splitlines() == ["== eval ==", "- mean_rel_l2: 1.2500e-01", "- steps: 4"]


def test_write_json_replaces_atomically(tmp_path):
    path = tmp_path / "nested" / "report.json"
    write_json(str(path), {"b": 1, "a": "坐标图"})
    write_json(str(path), {"b": 2})
    assert json.loads(path.read_text(encoding="utf-8")) == {"b": 2}
    assert not (tmp_path / "nested" / "report.json.tmp").exists()


def test_cleanup_temp_files(tmp_path):
    (tmp_path / "train").mkdir()
    (tmp_path / "train" / "u.npy.tmp").write_bytes(b"x")
    (tmp_path / "manifest.json.temp").write_bytes(b"x")
    (tmp_path / "keep.npy").write_bytes(b"x")
    assert cleanup_temp_files(str(tmp_path)) == 2
    assert (tmp_path / "keep.npy").exists()
    with pytest.raises(FileNotFoundError):
        cleanup_temp_files(str(tmp_path / "missing"))


def test_file_size_in_megabytes(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(b"\0" * (3 * 1024 * 1024))
    assert get_file_size_mb(str(path)) == 3.0
    with pytest.raises(FileNotFoundError):
        get_file_size_mb(str(tmp_path / "missing.bin"))


def test_platform_checker_passes_on_supported_runtime(monkeypatch):
    monkeypatch.setenv("OMP_NUM_THREADS", "1")
    checker = PlatformChecker()
    checker.check_compatibility()
    info = checker.get_platform_info()
    assert info["cpu_count"] >= 1
    assert info["memory_gb"] > 0


def test_platform_checker_rejects_old_python(monkeypatch):
    checker = PlatformChecker()
    monkeypatch.setattr(PlatformChecker, "MIN_PYTHON_VERSION", (99, 0))
    with pytest.raises(RuntimeError):
        checker.check_compatibility()


def test_run_log_captures_messages_inside_block(tmp_path):
    with run_log(str(tmp_path / "run"), "train") as path:
        logger.info("坐标图 {ξ, η} 已写出")
    logger.info("块外的日志不写入运行目录")
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    assert len(lines) == 1
    assert lines[0].endswith("INFO - 坐标图 {ξ, η} 已写出")
    assert " CST - " in lines[0]
