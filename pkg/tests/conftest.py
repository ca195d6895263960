import os

import numpy as np
import pytest

from src.autodiff.tensor import get_tape
from src.physics.mesh import Mesh, uniform_mesh

RUN_SLOW = os.getenv("CATO_RUN_SLOW") == "1"


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="长时间实验，设置 CATO_RUN_SLOW=1 后运行")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def clean_tape():
    """每个用例前后清空当前线程的 tape，并保证记录处于开启状态"""
    tape = get_tape()
    tape.clear()
    tape.enabled = True
    yield
    tape.clear()
    tape.enabled = True


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid8() -> Mesh:
    return uniform_mesh(8, 8)


@pytest.fixture
def skewed_mesh() -> Mesh:
    """绕原点旋转 30° 并非均匀拉伸的仿射网格"""
    base = uniform_mesh(9, 7).coords
    angle = np.pi / 6
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    stretched = base * np.array([2.0, 0.5])
    return Mesh(stretched @ rotation.T)
