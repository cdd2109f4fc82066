"""Grover adaptive search (SOGAS) and its classical counterpart (CSOGAS)
for fixed-confidence simulation optimization."""

from .csogas import ClassicalEstimatorConfig, csogas_run
from .dists import (
    Bernoulli,
    DiscretizedDistribution,
    TruncatedExponential,
    TruncatedGaussian,
    Uniform,
    discretize,
)
from .harness import ExperimentConfig, ExperimentRow, generate_instance, run_sweep
from .qsub import CONTRACT, STATEVECTOR, Mode, QueryLedger, SubroutineBackend
from .search import ProblemInstance, RunResult, Solution, sogas_run

__all__ = [
    "Bernoulli",
    "CONTRACT",
    "ClassicalEstimatorConfig",
    "DiscretizedDistribution",
    "ExperimentConfig",
    "ExperimentRow",
    "Mode",
    "ProblemInstance",
    "QueryLedger",
    "RunResult",
    "STATEVECTOR",
    "Solution",
    "SubroutineBackend",
    "TruncatedExponential",
    "TruncatedGaussian",
    "Uniform",
    "csogas_run",
    "discretize",
    "generate_instance",
    "run_sweep",
    "sogas_run",
]
