"""Multi-agent traffic signal control laboratory.

A mesoscopic queue-based traffic simulator wrapped as a cooperative
multi-agent environment, with rule-based controllers, value-based and
actor-critic trainers, an evaluation harness, and a TCP server exposing
environments to external training code.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    NotReadyError,
    ParseError,
    ProtocolError,
    RoutingError,
    StaleTrajectoryError,
    TscLabError,
)

__all__ = [
    "ConfigurationError",
    "NotReadyError",
    "ParseError",
    "ProtocolError",
    "RoutingError",
    "StaleTrajectoryError",
    "TscLabError",
    "__version__",
]
