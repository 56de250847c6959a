"""Concrete compressive strength from ultrasonic pulse velocity and rebound number.

Correlation-driven feature construction (HCVCM) feeding step-by-step
regression, gene expression programming and ANFIS, with the usual
evaluation statistics and a calibrated synthetic data generator.
"""
from .data import Dataset, GeneratorSpec, Sample, SummaryStats, generate_synthetic, load_csv, split_dataset, summarize
from .metrics import MetricsReport, coeff_det, evaluate
from .pipeline import RunConfig, RunResult, compare, run

__all__ = [
    "Dataset", "GeneratorSpec", "Sample", "SummaryStats", "generate_synthetic", "load_csv",
    "split_dataset", "summarize", "MetricsReport", "coeff_det", "evaluate",
    "RunConfig", "RunResult", "compare", "run",
]

__version__ = "0.1.0"
