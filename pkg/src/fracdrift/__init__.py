"""Heat-kernel experiments for isotropic stable processes with a critical
radial drift kappa |x|^-alpha x."""

__version__ = "0.1.0"

from .model import ConfigError, ModelParams, SingularityError, kappa_of_beta, solve_beta  # noqa: E402
from .specfun import DomainError, gamma_constant, gamma_fn, kappa_r  # noqa: E402

__all__ = [
    "__version__",
    "ConfigError",
    "DomainError",
    "ModelParams",
    "SingularityError",
    "gamma_constant",
    "gamma_fn",
    "kappa_of_beta",
    "kappa_r",
    "solve_beta",
]
