"""
坐标图轴向低秩算子 T_ζ 及其系数函数

(T_ζ f)_ij = Σ_r a_r(ζ_ij)·mean_t(b_r(ζ_it) f_it)
           + Σ_s c_s(ζ_ij)·mean_p(d_s(ζ_pj) f_pj)
           + ℓ(ζ_ij)·f_ij
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from src.errors import ShapeError
from src.geometry.chart import ChartCoords
from src.logging.logger_config import logger

MAX_DEGREE = 3


class Coefficient(ABC):
    """[−1,1]² 上的有界光滑系数函数，可解析给出上界与 Lipschitz 常数"""

    @abstractmethod
    def __call__(self, zeta: np.ndarray) -> np.ndarray:
        """在 (..., 2) 的坐标图上逐点求值"""

    @abstractmethod
    def bound(self) -> float:
        """sup |c| 的解析上界"""

    @abstractmethod
    def lipschitz(self) -> float:
        """Lipschitz 常数的解析上界"""


@dataclass
class PolynomialCoefficient(Coefficient):
    """Σ c_pq ξ^p η^q，总次数 ≤ 3"""

    terms: Dict[Tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for (p, q) in self.terms:
            if p < 0 or q < 0 or p + q > MAX_DEGREE:
                error_msg = f"多项式系数的次数必须在 0..{MAX_DEGREE} 之间，实际 ξ^{p} η^{q}"
                logger.error(error_msg)
                raise ValueError(error_msg)

    def __call__(self, zeta: np.ndarray) -> np.ndarray:
        xi, eta = zeta[..., 0], zeta[..., 1]
        value = np.zeros(zeta.shape[:-1])
        for (p, q), c in self.terms.items():
            value = value + c * xi**p * eta**q
        return value

    def bound(self) -> float:
        return float(sum(abs(c) for c in self.terms.values()))

    def lipschitz(self) -> float:
        # 各偏导在 [−1,1]² 上的上界
        grad_xi = sum(abs(p * c) for (p, _), c in self.terms.items())
        grad_eta = sum(abs(q * c) for (_, q), c in self.terms.items())
        return float(math.hypot(grad_xi, grad_eta))


@dataclass
class TrigCoefficient(Coefficient):
    """Σ A_k cos(π(m_k ξ + n_k η) + φ_k)，|m_k|,|n_k| ≤ 3"""

    terms: List[Tuple[float, int, int, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for _, m, n, _ in self.terms:
            if abs(m) > MAX_DEGREE or abs(n) > MAX_DEGREE:
                error_msg = f"三角系数的频率必须不超过 {MAX_DEGREE}，实际 ({m}, {n})"
                logger.error(error_msg)
                raise ValueError(error_msg)

    def __call__(self, zeta: np.ndarray) -> np.ndarray:
        xi, eta = zeta[..., 0], zeta[..., 1]
        value = np.zeros(zeta.shape[:-1])
        for amplitude, m, n, phase in self.terms:
            value = value + amplitude * np.cos(np.pi * (m * xi + n * eta) + phase)
        return value

    def bound(self) -> float:
        return float(sum(abs(amplitude) for amplitude, _, _, _ in self.terms))

    def lipschitz(self) -> float:
        grad_xi = sum(abs(amplitude) * np.pi * abs(m) for amplitude, m, _, _ in self.terms)
        grad_eta = sum(abs(amplitude) * np.pi * abs(n) for amplitude, _, n, _ in self.terms)
        return float(math.hypot(grad_xi, grad_eta))


def constant(value: float) -> PolynomialCoefficient:
    return PolynomialCoefficient({(0, 0): value} if value != 0.0 else {})


ZERO = constant(0.0)
ONE = constant(1.0)


@dataclass
class AxialOperatorSpec:
    """
    Args:
        row_terms: R_ξ 个 (a_r, b_r)
        col_terms: R_η 个 (c_s, d_s)
        diagonal: ℓ
    """

    row_terms: List[Tuple[Coefficient, Coefficient]] = field(default_factory=list)
    col_terms: List[Tuple[Coefficient, Coefficient]] = field(default_factory=list)
    diagonal: Coefficient = field(default_factory=lambda: ZERO)

    @property
    def rank_xi(self) -> int:
        return len(self.row_terms)

    @property
    def rank_eta(self) -> int:
        return len(self.col_terms)

    def chart_constant(self) -> float:
        """C_chart = Σ(L_a B + A L_b) + Σ(L_c D + C L_d) + L_ℓ"""
        total = self.diagonal.lipschitz()
        for outer, inner in self.row_terms + self.col_terms:
            total += outer.lipschitz() * inner.bound() + outer.bound() * inner.lipschitz()
        return float(total)

    def summary(self) -> Dict:
        return {"R_xi": self.rank_xi, "R_eta": self.rank_eta, "C_chart": self.chart_constant()}


def chart_array(zeta: Union[ChartCoords, np.ndarray]) -> np.ndarray:
    values = zeta.numpy() if isinstance(zeta, ChartCoords) else np.asarray(zeta, dtype=np.float64)
    if values.ndim == 4 and values.shape[0] == 1:
        values = values[0]
    if values.ndim != 3 or values.shape[-1] != 2:
        error_msg = f"坐标图必须为 (H, W, 2)，实际 {values.shape}"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    return values


def apply_T(spec: AxialOperatorSpec, zeta: Union[ChartCoords, np.ndarray], f: np.ndarray) -> np.ndarray:
    """
    精确计算 T_ζ f

    Args:
        spec: 算子描述
        zeta: (H, W, 2) 坐标图
        f: (..., H, W) 输入场，前导维视为多个独立输入

    Returns:
        与 f 同形的输出
    """
    z = chart_array(zeta)
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-2:] != z.shape[:2]:
        error_msg = f"输入场空间形状 {f.shape[-2:]} 与坐标图 {z.shape[:2]} 不一致"
        logger.error(error_msg)
        raise ShapeError(error_msg)
    out = spec.diagonal(z) * f
    for a, b in spec.row_terms:
        out = out + a(z) * np.mean(b(z) * f, axis=-1, keepdims=True)
    for c, d in spec.col_terms:
        out = out + c(z) * np.mean(d(z) * f, axis=-2, keepdims=True)
    return out


def operator_matrix(spec: AxialOperatorSpec, zeta: Union[ChartCoords, np.ndarray]) -> np.ndarray:
    """按行主序展平后的 N×N 矩阵表示"""
    z = chart_array(zeta)
    height, width = z.shape[:2]
    basis = np.eye(height * width).reshape(height * width, height, width)
    return apply_T(spec, z, basis).reshape(height * width, -1).T


def identity_spec() -> AxialOperatorSpec:
    return AxialOperatorSpec(diagonal=ONE)


def row_mean_spec() -> AxialOperatorSpec:
    return AxialOperatorSpec(row_terms=[(ONE, ONE)])


def linear_chart_spec() -> AxialOperatorSpec:
    """a_1(ζ) = ξ，b_1 ≡ 1，其余为 0；C_chart = 1"""
    return AxialOperatorSpec(row_terms=[(PolynomialCoefficient({(1, 0): 1.0}), ONE)])


def polynomial_spec() -> AxialOperatorSpec:
    """R_ξ = R_η = 2 的三次多项式系数算子"""
    return AxialOperatorSpec(
        row_terms=[
            (
                PolynomialCoefficient({(0, 0): 1.0, (1, 0): 0.5, (0, 2): -0.3}),
                PolynomialCoefficient({(0, 0): 0.5, (1, 1): 1.0}),
            ),
            (
                PolynomialCoefficient({(3, 0): 1.0, (0, 1): -0.2}),
                PolynomialCoefficient({(0, 0): 1.0, (2, 0): -0.4}),
            ),
        ],
        col_terms=[
            (PolynomialCoefficient({(0, 1): 0.7, (1, 2): 0.2}), ONE),
            (
                PolynomialCoefficient({(0, 0): -0.5, (2, 0): 1.0}),
                PolynomialCoefficient({(0, 3): 1.0, (0, 0): 0.3}),
            ),
        ],
        diagonal=PolynomialCoefficient({(0, 0): 0.5, (1, 0): 0.25, (0, 3): -0.1}),
    )


def trig_spec() -> AxialOperatorSpec:
    return AxialOperatorSpec(
        row_terms=[(TrigCoefficient([(0.8, 1, 0, 0.0)]), TrigCoefficient([(0.5, 0, 1, 0.3), (0.5, 0, 0, 0.0)]))],
        col_terms=[(ONE, TrigCoefficient([(0.6, 1, 1, 0.0)]))],
        diagonal=TrigCoefficient([(0.3, 2, 0, 0.1)]),
    )


def default_chart(height: int, width: int) -> np.ndarray:
    """验证用的光滑非均匀坐标图，值域在 [−0.9, 0.9] 内"""
    s = np.linspace(-1.0, 1.0, height)[:, None] * np.ones((1, width))
    t = np.ones((height, 1)) * np.linspace(-1.0, 1.0, width)[None, :]
    xi = 0.8 * s + 0.1 * np.sin(np.pi * t)
    eta = 0.8 * t + 0.1 * np.sin(np.pi * s) * s
    return np.stack([xi, eta], axis=-1)


def sample_sphere(rng: np.random.Generator, count: int, shape: Sequence[int], radius: float) -> np.ndarray:
    """在 ‖f‖₂ = radius 的球面上均匀采样 count 个场"""
    samples = rng.standard_normal((count,) + tuple(shape))
    norms = np.linalg.norm(samples.reshape(count, -1), axis=1).reshape((count,) + (1,) * len(shape))
    return radius * samples / norms


def indicator_candidates(shape: Sequence[int], radius: float) -> np.ndarray:
    """±radius·e_n，覆盖每个节点的坐标轴方向"""
    size = int(np.prod(shape))
    basis = np.eye(size).reshape((size,) + tuple(shape)) * radius
    return np.concatenate([basis, -basis], axis=0)
