"""Boundary-truncated semi-Lagrangian solver for Dirichlet HJB equations."""

__version__ = "0.1.0"

from .estimator import SemiLagrangianHJB  # noqa: E402

__all__ = ["SemiLagrangianHJB", "__version__"]
