"""坐标图扰动稳定性与复合逼近界的数值检查"""

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Union

import numpy as np

from src.autodiff.rng import make_rng
from src.geometry.chart import ChartCoords, chart_perturb
from src.logging.logger_config import logger
from src.physics.mesh import Mesh, uniform_mesh
from src.theory.construct import construct_lemma1_network, sup_error
from src.theory.operators import AxialOperatorSpec, apply_T, chart_array, operator_matrix


@dataclass
class BoundReport:
    """
    一次界检查的结果；passed 严格按 measured ≤ bound 判定，不附加余量
    """

    name: str
    measured: float
    bound: float
    samples: int
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.bound - self.measured

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["margin"] = self.margin
        data["passed"] = self.passed
        return data


def chart_difference(
    spec: AxialOperatorSpec,
    zeta: Union[ChartCoords, np.ndarray],
    f: np.ndarray,
    delta: float,
    direction: np.ndarray,
) -> float:
    """固定输入与扰动方向时的 ‖T_ζ̂ f − T_ζ f‖₂"""
    z = chart_array(zeta)
    perturbed = chart_perturb(ChartCoords.from_array(z), delta, direction=direction).numpy()
    return float(np.linalg.norm(apply_T(spec, perturbed, f) - apply_T(spec, z, f)))


def measure_chart_stability(
    spec: AxialOperatorSpec,
    zeta: Union[ChartCoords, np.ndarray],
    delta: float,
    trials: int,
    seed: int = 0,
) -> BoundReport:
    """
    随机扰动坐标图 trials 次，记录最大比值 ‖T_ζ̂ f − T_ζ f‖₂ / (δ‖f‖₂)

    δ=0 时扰动后的坐标图与原图完全相同，记录的是差值本身（必须恰为 0）。

    Raises:
        ValueError: delta 为负
    """
    z = chart_array(zeta)
    rng = make_rng(seed, stream=2)
    c_chart = spec.chart_constant()
    worst = 0.0
    for _ in range(trials):
        perturbed = chart_perturb(ChartCoords.from_array(z), delta, rng=rng).numpy()
        f = rng.standard_normal(z.shape[:2])
        difference = float(np.linalg.norm(apply_T(spec, perturbed, f) - apply_T(spec, z, f)))
        ratio = difference if delta == 0 else difference / (delta * float(np.linalg.norm(f)))
        worst = max(worst, ratio)
    report = BoundReport(
        name=f"chart-stability(delta={delta})",
        measured=worst,
        bound=c_chart if delta > 0 else 0.0,
        samples=trials,
        params={"delta": delta, "C_chart": c_chart},
    )
    logger.info(f"坐标图稳定性 δ={delta}: 最大比值 {worst:.4e}, C_chart={c_chart:.4e}, 通过={report.passed}")
    return report


def residual_operator(size: int, eps_rk: float, rng: np.random.Generator) -> np.ndarray:
    """谱范数恰为 eps_rk 的随机 N×N 矩阵"""
    matrix = rng.standard_normal((size, size))
    if eps_rk == 0.0:
        return np.zeros((size, size))
    return matrix * (eps_rk / np.linalg.norm(matrix, ord=2))


def verify_theorem1(
    spec: AxialOperatorSpec,
    zeta: Union[ChartCoords, np.ndarray],
    zeta_hat: Union[ChartCoords, np.ndarray],
    M_bound: float,
    eps_rk: float,
    eps_nn: float,
    mesh: Optional[Mesh] = None,
    seed: int = 0,
) -> BoundReport:
    """
    目标 G̃ = T_ζ + R（‖R‖₂ = ε_rk），网络按 ζ̂ 构造；
    检查 sup‖N_Θ(f) − G̃f‖₂ ≤ ε_rk·M + C_chart·M·δ + ε_nn，δ = max‖ζ̂ − ζ‖

    Raises:
        FitError: 网络构造失败
    """
    z = chart_array(zeta)
    z_hat = chart_array(zeta_hat)
    height, width = z.shape[:2]
    if mesh is None:
        mesh = uniform_mesh(height, width)
    delta = float(np.max(np.linalg.norm(z_hat - z, axis=-1)))
    c_chart = spec.chart_constant()

    rng = make_rng(seed, stream=3)
    target = operator_matrix(spec, z) + residual_operator(height * width, eps_rk, rng)
    ms = construct_lemma1_network(spec, z_hat, M_bound, eps_nn, mesh=mesh, seed=seed)

    def composite(fields: np.ndarray) -> np.ndarray:
        return (fields.reshape(len(fields), -1) @ target.T).reshape(fields.shape)

    measured, count = sup_error(ms, mesh, composite, M_bound, rng)
    bound = eps_rk * M_bound + c_chart * M_bound * delta + eps_nn
    report = BoundReport(
        name="composite-approximation",
        measured=measured,
        bound=bound,
        samples=count,
        params={"M": M_bound, "delta": delta, "eps_rk": eps_rk, "eps_nn": eps_nn, "C_chart": c_chart},
    )
    logger.info(f"复合逼近界: 实测 {measured:.4e} ≤ 界 {bound:.4e}? {report.passed}")
    return report
