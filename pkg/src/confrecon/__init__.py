"""Confidential reconstruction accuracy (CRA) for remote estimation over wiretap erasure channels."""

__version__ = "0.1.0"

from .estimators import CRAMetrics, CRAPolicyOptimizer
from .metrics import (
    CraRational,
    MetricReport,
    avg_cra_closed,
    avg_cra_from_pi,
    cra_coefficients,
    cra_curve,
    marginal_accuracy,
    marginal_confidentiality,
    metric_report,
    weighted_metric,
)
from .model import (
    ChannelPair,
    CorrelationClass,
    DomainError,
    LambdaSet,
    Policy,
    SourceModel,
    correlation_class,
    lambda_set,
    stationary_source,
)
from .optimizer import Branch, OptimizerResult, grid_argmax, optimize
from .simulation import SimConfig, SimEstimate, simulate
from .stationary import (
    build_kernel,
    stationary_by_series,
    stationary_closed_form,
    stationary_numeric,
)

__all__ = [
    "Branch", "CRAMetrics", "CRAPolicyOptimizer", "ChannelPair", "CorrelationClass",
    "CraRational", "DomainError", "LambdaSet", "MetricReport", "OptimizerResult", "Policy",
    "SimConfig", "SimEstimate", "SourceModel", "avg_cra_closed", "avg_cra_from_pi",
    "build_kernel", "correlation_class", "cra_coefficients", "cra_curve", "grid_argmax",
    "lambda_set", "marginal_accuracy", "marginal_confidentiality", "metric_report", "optimize",
    "simulate", "stationary_by_series", "stationary_closed_form", "stationary_numeric",
    "stationary_source", "weighted_metric",
]
