from src.geometry.chart import (
    ChartCoords,
    ChartNet,
    NormalizedChart,
    SILU_DERIVATIVE_SUP,
    chart_forward,
    chart_perturb,
)
from src.geometry.diagnostics import ChartSpectrum, chart_spectrum, plot_chart, write_chart_csv

__all__ = [
    "ChartCoords",
    "ChartNet",
    "NormalizedChart",
    "SILU_DERIVATIVE_SUP",
    "chart_forward",
    "chart_perturb",
    "ChartSpectrum",
    "chart_spectrum",
    "plot_chart",
    "write_chart_csv",
]
