"""Cardinality-penalized min-max problems: exact continuous relaxations,
stationarity certificates, PGDA/APGDA solvers and a brute-force grid oracle."""

from .penalties import DensitySpec, Interval, relax_value
from .problems import SaddleProblem, eval_f, eval_fR, logistic_instance, toy_bilinear_instance

__version__ = "0.1.0"

__all__ = [
    "DensitySpec",
    "Interval",
    "relax_value",
    "SaddleProblem",
    "eval_f",
    "eval_fR",
    "logistic_instance",
    "toy_bilinear_instance",
]
