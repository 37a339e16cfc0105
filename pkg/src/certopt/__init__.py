"""Certified lower bounds on the global minimum of smooth functions.

A nonnegative kernel sum-of-squares model is fitted to ``f - c`` and the
spectral l1 norm of the residual is estimated from random frequencies,
giving ``min f >= c - epsilon`` with high probability.
"""

__version__ = "0.1.0"

from .certifier import (  # noqa: E402
    Certificate,
    InsufficientSamplesError,
    OutOfReachError,
    certify,
    certify_chebyshev,
    certify_mom,
    mean_estimate,
    mom_estimate,
    residual_hilbert_norm_bound,
    residual_samples,
)
from .harmonic import *  # noqa: E402,F401,F403
from .harmonic import __all__ as _harmonic_all  # noqa: E402
from .model import KSoSModel, model_backward, model_forward  # noqa: E402
from .trainer import TrainConfig, TrainResult, find_candidate, lse_loss, train_model  # noqa: E402

__all__ = [
    "Certificate",
    "InsufficientSamplesError",
    "KSoSModel",
    "OutOfReachError",
    "TrainConfig",
    "TrainResult",
    "certify",
    "certify_chebyshev",
    "certify_mom",
    "find_candidate",
    "lse_loss",
    "mean_estimate",
    "model_backward",
    "model_forward",
    "mom_estimate",
    "residual_hilbert_norm_bound",
    "residual_samples",
    "train_model",
    *_harmonic_all,
]
