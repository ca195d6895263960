"""合成 Darcy 型稳态扩散样本：系数场、结构网格（可扭曲）与有限体积参考解"""

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from src.autodiff.rng import make_rng
from src.errors import FoldOverError, ShapeError, SolverError
from src.logging.logger_config import logger
from src.physics.mesh import Mesh, uniform_mesh

SOURCE_MODES = ("constant", "manufactured", "random")
SOLVER_RTOL = 1e-10
SOLVER_MAXITER = 20000
FOURIER_MODES = 4
# (1 − |A|π)² − 4A²π² > 0 的临界幅度，低于它雅可比行列式必为正
MAX_SAFE_AMPLITUDE = 1.0 / (3.0 * math.pi)

COEFF_STREAM = 10
SOURCE_STREAM = 11
SUBSET_STREAM = 12


@dataclass
class DataConfig:
    resolution: int = 32
    train_samples: int = 512
    test_samples: int = 64
    contrast: float = 10.0
    source: str = "constant"
    amplitude: float = 0.0
    seed: int = 0
    pc_points: int = 0

    def validate(self) -> None:
        problems = []
        if self.resolution < 3:
            problems.append(f"resolution 至少为 3，实际 {self.resolution}")
        if self.train_samples < 0 or self.test_samples < 0:
            problems.append("样本数不能为负")
        if self.contrast < 1.0:
            problems.append(f"contrast 必须 ≥ 1，实际 {self.contrast}")
        if self.source not in SOURCE_MODES:
            problems.append(f"source 必须为 {SOURCE_MODES} 之一，实际 {self.source}")
        if self.pc_points < 0 or self.pc_points > self.resolution**2:
            problems.append(f"pc_points 必须在 [0, {self.resolution ** 2}] 内，实际 {self.pc_points}")
        if problems:
            error_msg = "数据配置非法: " + "; ".join(problems)
            logger.error(error_msg)
            raise ValueError(error_msg)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class SyntheticSample:
    mesh: Mesh
    feats: np.ndarray
    target: np.ndarray
    source: np.ndarray
    metadata: Dict[str, float] = field(default_factory=dict)

    def fields(self) -> Dict[str, np.ndarray]:
        return {
            "coords": self.mesh.coords,
            "feats": self.feats,
            "target": self.target,
            "source": self.source,
        }


def sample_seed(base_seed: int, index: int) -> int:
    """按全局样本编号派生样本种子，与生成顺序和并发度无关"""
    return (int(base_seed) << 32) | int(index)


def _fourier_field(rng: np.random.Generator, height: int, width: int, modes: int = FOURIER_MODES) -> np.ndarray:
    s = np.linspace(0.0, 1.0, height)[:, None]
    t = np.linspace(0.0, 1.0, width)[None, :]
    result = np.zeros((height, width))
    for m in range(modes + 1):
        for n in range(modes + 1):
            amplitude = rng.standard_normal() / (1.0 + m * m + n * n)
            phase_s, phase_t = rng.uniform(0.0, 2.0 * math.pi, size=2)
            result += amplitude * np.cos(math.pi * m * s + phase_s) * np.cos(math.pi * n * t + phase_t)
    return result


def gen_coefficient(seed: int, height: int, width: int, contrast: float) -> np.ndarray:
    """
    截断随机傅里叶和经 min-max 映射到 [1, contrast] 的光滑正系数场

    Raises:
        ValueError: contrast < 1
    """
    if contrast < 1.0:
        error_msg = f"系数对比度必须 ≥ 1，实际 {contrast}"
        logger.error(error_msg)
        raise ValueError(error_msg)
    if contrast == 1.0:
        return np.ones((height, width))
    raw = _fourier_field(make_rng(seed, stream=COEFF_STREAM), height, width)
    low, high = float(raw.min()), float(raw.max())
    if high - low <= 0.0:
        return np.ones((height, width))
    unit = np.clip((raw - low) / (high - low), 0.0, 1.0)
    return 1.0 + (contrast - 1.0) * unit


def gen_source(mode: str, mesh: Mesh, seed: int = 0) -> np.ndarray:
    """
    Args:
        mode: constant 为 f≡1；manufactured 为 2π² sin(πx) sin(πy)；random 为 [0.5, 1.5] 内的光滑随机场
        mesh: 求解网格
        seed: random 模式的种子

    Raises:
        ValueError: 未知模式
    """
    x, y = mesh.coords[..., 0], mesh.coords[..., 1]
    if mode == "constant":
        return np.ones(mesh.spatial_shape)
    if mode == "manufactured":
        return 2.0 * math.pi**2 * np.sin(math.pi * x) * np.sin(math.pi * y)
    if mode == "random":
        raw = _fourier_field(make_rng(seed, stream=SOURCE_STREAM), mesh.height, mesh.width)
        peak = float(np.max(np.abs(raw)))
        return 1.0 + 0.5 * raw / peak if peak > 0.0 else np.ones(mesh.spatial_shape)
    error_msg = f"未知的源项模式: {mode}，可选 {SOURCE_MODES}"
    logger.error(error_msg)
    raise ValueError(error_msg)


def _grid_spacing(mesh: Mesh) -> Tuple[float, float]:
    """轴对齐网格取物理步长；扭曲网格在参考单位正方形上求解"""
    coords = mesh.coords
    hx = float(coords[1, 0, 0] - coords[0, 0, 0])
    hy = float(coords[0, 1, 1] - coords[0, 0, 1])
    xs = coords[0, 0, 0] + hx * np.arange(mesh.height)[:, None]
    ys = coords[0, 0, 1] + hy * np.arange(mesh.width)[None, :]
    if hx > 0 and hy > 0 and np.allclose(coords[..., 0], xs) and np.allclose(coords[..., 1], ys):
        return hx, hy
    return 1.0 / (mesh.height - 1), 1.0 / (mesh.width - 1)


def _harmonic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * a * b / (a + b)


def darcy_matrix(a: np.ndarray, hx: float, hy: float) -> sparse.csr_matrix:
    """内部节点上对称正定的五点有限体积矩阵，界面系数取调和平均，边界为齐次 Dirichlet"""
    height, width = a.shape
    n_i, n_j = height - 2, width - 2
    index = np.arange(n_i * n_j).reshape(n_i, n_j)

    east = _harmonic(a[1:-1, 1:-1], a[2:, 1:-1]) / hx**2
    west = _harmonic(a[1:-1, 1:-1], a[:-2, 1:-1]) / hx**2
    north = _harmonic(a[1:-1, 1:-1], a[1:-1, 2:]) / hy**2
    south = _harmonic(a[1:-1, 1:-1], a[1:-1, :-2]) / hy**2

    rows = [index.ravel()]
    cols = [index.ravel()]
    vals = [(east + west + north + south).ravel()]
    rows.append(index[:-1, :].ravel())
    cols.append(index[1:, :].ravel())
    vals.append(-east[:-1, :].ravel())
    rows.append(index[1:, :].ravel())
    cols.append(index[:-1, :].ravel())
    vals.append(-west[1:, :].ravel())
    rows.append(index[:, :-1].ravel())
    cols.append(index[:, 1:].ravel())
    vals.append(-north[:, :-1].ravel())
    rows.append(index[:, 1:].ravel())
    cols.append(index[:, :-1].ravel())
    vals.append(-south[:, 1:].ravel())
    size = n_i * n_j
    return sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()


def solve_darcy(a: np.ndarray, mesh: Mesh, f_source: np.ndarray) -> np.ndarray:
    """
    求解 −∇·(a∇u) = f，u 在边界上为 0

    Args:
        a: (H, W) 正系数场
        mesh: 结构网格
        f_source: (H, W) 源项

    Returns:
        (H, W) 解，边界节点为 0

    Raises:
        ShapeError: 场与网格形状不一致
        ValueError: 系数非正
        SolverError: 共轭梯度在迭代上限内未收敛
    """
    a = np.asarray(a, dtype=np.float64)
    f_source = np.asarray(f_source, dtype=np.float64)
    if a.shape != mesh.spatial_shape or f_source.shape != mesh.spatial_shape:
        error_msg = f"系数 {a.shape}、源项 {f_source.shape} 与网格 {mesh.spatial_shape} 不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    if mesh.height < 3 or mesh.width < 3:
        error_msg = f"网格至少需要 3×3 才有内部节点，实际 {mesh.spatial_shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    if np.any(a <= 0.0):
        error_msg = "扩散系数必须处处为正"
        logger.error(error_msg)
        raise ValueError(error_msg)

    hx, hy = _grid_spacing(mesh)
    matrix = darcy_matrix(a, hx, hy)
    rhs = f_source[1:-1, 1:-1].ravel()
    u = np.zeros(mesh.spatial_shape)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return u

    solution, info = sparse_linalg.cg(matrix, rhs, rtol=SOLVER_RTOL, atol=0.0, maxiter=SOLVER_MAXITER)
    residual = float(np.linalg.norm(matrix @ solution - rhs)) / rhs_norm
    if info != 0 or not np.all(np.isfinite(solution)) or residual > 10.0 * SOLVER_RTOL:
        error_msg = f"共轭梯度未收敛: info={info}, 相对残差 {residual:.3e}"
        logger.error(error_msg)
        raise SolverError(error_msg)
    u[1:-1, 1:-1] = solution.reshape(mesh.height - 2, mesh.width - 2)
    return u


def jacobian_determinant(height: int, width: int, amplitude: float) -> np.ndarray:
    """扭曲映射在各节点处的解析雅可比行列式"""
    s = np.linspace(0.0, 1.0, height)[:, None]
    t = np.linspace(0.0, 1.0, width)[None, :]
    pi = math.pi
    x_s = 1.0 + amplitude * pi * np.cos(pi * s) * np.sin(2 * pi * t)
    x_t = 2.0 * amplitude * pi * np.sin(pi * s) * np.cos(2 * pi * t)
    y_s = 2.0 * amplitude * pi * np.cos(2 * pi * s) * np.sin(pi * t)
    y_t = 1.0 + amplitude * pi * np.sin(2 * pi * s) * np.cos(pi * t)
    return x_s * y_t - x_t * y_s


def distort_mesh(height: int, width: int, amplitude: float) -> Mesh:
    """
    x = s + A sin(πs) sin(2πt)，y = t + A sin(2πs) sin(πt)；边界保持在单位正方形上

    Raises:
        FoldOverError: 某节点雅可比行列式非正
    """
    if amplitude == 0.0:
        return uniform_mesh(height, width)
    det = jacobian_determinant(height, width, amplitude)
    min_det = float(det.min())
    if min_det <= 0.0:
        error_msg = f"扭曲幅度 {amplitude} 导致网格翻折（最小雅可比行列式 {min_det:.3e}）"
        logger.error(error_msg)
        raise FoldOverError(error_msg)
    if abs(amplitude) > MAX_SAFE_AMPLITUDE:
        logger.warning(f"扭曲幅度 {amplitude} 超过保守上限 {MAX_SAFE_AMPLITUDE:.4f}，最小雅可比行列式 {min_det:.3e}")
    s, t = np.meshgrid(np.linspace(0.0, 1.0, height), np.linspace(0.0, 1.0, width), indexing="ij")
    x = s + amplitude * np.sin(math.pi * s) * np.sin(2 * math.pi * t)
    y = t + amplitude * np.sin(2 * math.pi * s) * np.sin(math.pi * t)
    return Mesh(np.stack([x, y], axis=-1))


def generate_sample(config: DataConfig, index: int, mesh: Optional[Mesh] = None) -> SyntheticSample:
    """
    按全局编号生成一个样本；同一 (config, index) 结果逐位相同

    Raises:
        SolverError: 参考解求解失败
        FoldOverError: 扭曲网格翻折
    """
    seed = sample_seed(config.seed, index)
    size = config.resolution
    if mesh is None:
        mesh = distort_mesh(size, size, config.amplitude)
    feats = gen_coefficient(seed, size, size, config.contrast)
    source = gen_source(config.source, mesh, seed)
    target = solve_darcy(feats, mesh, source)
    return SyntheticSample(
        mesh=mesh,
        feats=feats,
        target=target,
        source=source,
        metadata={"seed": seed, "index": index, "resolution": size, "amplitude": config.amplitude},
    )


def point_subset(sample: SyntheticSample, count: int, seed: int) -> np.ndarray:
    """随机抽取 count 个节点并打乱顺序，返回展平后的节点编号"""
    total = sample.mesh.height * sample.mesh.width
    if count < 1 or count > total:
        error_msg = f"点云子集大小必须在 [1, {total}] 内，实际 {count}"
        logger.error(error_msg)
        raise ValueError(error_msg)
    return make_rng(seed, stream=SUBSET_STREAM).permutation(total)[:count]
