"""理论验证默认套件：单块构造、坐标图稳定性、δ 扫描与复合逼近界"""

from dataclasses import dataclass
from typing import List, Sequence

from src.autodiff.rng import make_rng
from src.geometry.chart import ChartCoords, chart_perturb
from src.logging.logger_config import logger
from src.physics.mesh import uniform_mesh
from src.theory.bounds import BoundReport, chart_difference, measure_chart_stability, verify_theorem1
from src.theory.construct import construct_lemma1_network, sup_error
from src.theory.operators import (
    apply_T,
    default_chart,
    identity_spec,
    linear_chart_spec,
    polynomial_spec,
    row_mean_spec,
)

STABILITY_DELTAS = (0.01, 0.05, 0.1)
SWEEP_DELTAS = (0.0, 0.01, 0.05, 0.1)


@dataclass
class TheorySuiteConfig:
    grid: int = 8
    M_bound: float = 1.0
    eps_nn: float = 1e-2
    eps_rk: float = 0.05
    delta: float = 0.05
    trials: int = 100
    seed: int = 0

    def validate(self) -> None:
        if self.grid < 3 or self.M_bound <= 0 or self.eps_nn <= 0 or self.eps_rk < 0 or self.delta < 0 or self.trials < 1:
            error_msg = f"理论套件配置非法: {self}"
            logger.error(error_msg)
            raise ValueError(error_msg)


def lemma1_report(name: str, spec, config: TheorySuiteConfig) -> BoundReport:
    zeta = default_chart(config.grid, config.grid)
    mesh = uniform_mesh(config.grid, config.grid)
    ms = construct_lemma1_network(spec, zeta, config.M_bound, config.eps_nn, mesh=mesh, seed=config.seed)
    measured, count = sup_error(
        ms, mesh, lambda f: apply_T(spec, zeta, f), config.M_bound, make_rng(config.seed, stream=4)
    )
    return BoundReport(
        name=f"axial-realization:{name}",
        measured=measured,
        bound=config.eps_nn,
        samples=count,
        params={"M": config.M_bound, "eps_nn": config.eps_nn, "R_xi": spec.rank_xi, "R_eta": spec.rank_eta},
    )


def delta_sweep(config: TheorySuiteConfig, deltas: Sequence[float] = SWEEP_DELTAS) -> List[float]:
    """固定 f 与扰动方向，返回各 δ 下的 ‖ΔT f‖₂"""
    zeta = default_chart(config.grid, config.grid)
    rng = make_rng(config.seed, stream=5)
    f = rng.standard_normal((config.grid, config.grid))
    direction = rng.standard_normal(zeta.shape)
    return [chart_difference(linear_chart_spec(), zeta, f, delta, direction) for delta in deltas]


def sweep_report(config: TheorySuiteConfig) -> BoundReport:
    """单调性以逐级下降量的最大值作为实测值，界为 0"""
    values = delta_sweep(config)
    worst_drop = max([0.0] + [values[k] - values[k + 1] for k in range(len(values) - 1)])
    return BoundReport(
        name="chart-stability-sweep",
        measured=worst_drop,
        bound=0.0,
        samples=len(values),
        params={f"delta={delta}": value for delta, value in zip(SWEEP_DELTAS, values)},
    )


def run_theory_suite(config: TheorySuiteConfig) -> List[BoundReport]:
    """
    Raises:
        FitError: 单块构造在宽度预算内失败
    """
    config.validate()
    reports: List[BoundReport] = []
    for name, spec in (("identity", identity_spec()), ("row-mean", row_mean_spec()), ("poly3", polynomial_spec())):
        logger.info(f"构造单块网络: {name}")
        reports.append(lemma1_report(name, spec, config))

    zeta = default_chart(config.grid, config.grid)
    for delta in (0.0,) + STABILITY_DELTAS:
        reports.append(measure_chart_stability(linear_chart_spec(), zeta, delta, config.trials, seed=config.seed))
    reports.append(sweep_report(config))

    zeta_hat = chart_perturb(
        ChartCoords.from_array(zeta), config.delta, rng=make_rng(config.seed, stream=6)
    ).numpy()
    reports.append(
        verify_theorem1(
            polynomial_spec(),
            zeta,
            zeta_hat,
            config.M_bound,
            config.eps_rk,
            config.eps_nn,
            mesh=uniform_mesh(config.grid, config.grid),
            seed=config.seed,
        )
    )

    failed = [report.name for report in reports if not report.passed]
    if failed:
        logger.warning(f"以下界检查未通过: {failed}")
    else:
        logger.info(f"全部 {len(reports)} 项界检查通过")
    return reports


def reports_to_json(reports: Sequence[BoundReport]) -> List[dict]:
    return [report.to_dict() for report in reports]
