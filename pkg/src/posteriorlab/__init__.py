"""Numerical laboratory for posterior concentration, Bayesian tests,
remote-contiguity diagnostics and credible-to-confidence conversion."""

from .measures import (
    FiniteDist,
    TransitionMatrix,
    hellinger,
    hellinger_transform,
    joint_two_step,
    kl_divergence,
    stationary_distribution,
    total_variation,
)

__version__ = "0.1.0"

__all__ = [
    "FiniteDist",
    "TransitionMatrix",
    "hellinger",
    "hellinger_transform",
    "joint_two_step",
    "kl_divergence",
    "stationary_distribution",
    "total_variation",
    "__version__",
]
