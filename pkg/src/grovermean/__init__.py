"""Exact simulation of Grover-operator based mean estimation on finite distributions."""

from .errors import (CapExceeded, CertificateFailure, DistributionFormatError, GroverMeanError,
                     PreconditionError)
from .prob import FiniteDist, UniRV, covariance, load_dist, moments, parse_dist

__version__ = "0.1.0"

__all__ = ["CapExceeded", "CertificateFailure", "DistributionFormatError", "FiniteDist", "GroverMeanError",
           "PreconditionError", "UniRV", "covariance", "load_dist", "moments", "parse_dist"]
