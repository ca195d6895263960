from src.theory.operators import (
    AxialOperatorSpec,
    Coefficient,
    PolynomialCoefficient,
    TrigCoefficient,
    apply_T,
    default_chart,
    identity_spec,
    linear_chart_spec,
    operator_matrix,
    polynomial_spec,
    row_mean_spec,
    trig_spec,
)
from src.theory.construct import ChannelLayout, construct_lemma1_network, network_apply, sup_error
from src.theory.bounds import BoundReport, chart_difference, measure_chart_stability, verify_theorem1
from src.theory.suite import TheorySuiteConfig, reports_to_json, run_theory_suite

__all__ = [
    "AxialOperatorSpec",
    "Coefficient",
    "PolynomialCoefficient",
    "TrigCoefficient",
    "apply_T",
    "default_chart",
    "identity_spec",
    "linear_chart_spec",
    "operator_matrix",
    "polynomial_spec",
    "row_mean_spec",
    "trig_spec",
    "ChannelLayout",
    "construct_lemma1_network",
    "network_apply",
    "sup_error",
    "BoundReport",
    "chart_difference",
    "measure_chart_stability",
    "verify_theorem1",
    "TheorySuiteConfig",
    "reports_to_json",
    "run_theory_suite",
]
