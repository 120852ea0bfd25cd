"""Mean-field stopping numerics (compiled core)."""

from ._core import (
    __version__,
    exact_empirical_rate,
    gibbs_policy,
    run_cli,
    shannon_entropy,
    solve_regularized_ode,
    thresholds,
)

__all__ = [
    "__version__",
    "exact_empirical_rate",
    "gibbs_policy",
    "run_cli",
    "shannon_entropy",
    "solve_regularized_ode",
    "thresholds",
]
