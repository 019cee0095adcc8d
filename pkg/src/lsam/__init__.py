"""Bayesian latent space accumulator model for response accuracy and time."""

from lsam.model import (
    DomainError,
    IndicatorTables,
    ModelState,
    NumericalError,
    Outcome,
    ResponseDataset,
    ResponseRecord,
    TimeGrid,
    cif,
    cumulative_baseline,
    hazard_at,
    log_joint_density,
    log_likelihood,
    overall_hazard_segment,
    survival,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "IndicatorTables",
    "ModelState",
    "NumericalError",
    "Outcome",
    "ResponseDataset",
    "ResponseRecord",
    "TimeGrid",
    "cif",
    "cumulative_baseline",
    "hazard_at",
    "log_joint_density",
    "log_likelihood",
    "overall_hazard_segment",
    "survival",
    "__version__",
]
