"""Shared exception types."""


class TscLabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TscLabError, ValueError):
    """Invalid configuration value or inconsistent option combination."""


class ParseError(TscLabError, ValueError):
    """Network document failed validation; the message names the offending entity."""


class RoutingError(TscLabError, ValueError):
    """No movement-consistent route exists between the requested lanes."""


class NotReadyError(TscLabError, RuntimeError):
    """Operation requested before its inputs are available (e.g. short buffer)."""


class StaleTrajectoryError(TscLabError, RuntimeError):
    """On-policy update fed trajectories collected under older parameters."""


class ProtocolError(TscLabError, RuntimeError):
    """Wire-protocol violation reported by a peer or detected locally."""
