"""Exception hierarchy shared by every module.

All errors derive from :class:`MpgError`, itself a ``ValueError`` so callers
that only guard against ``ValueError`` keep working.
"""

from __future__ import annotations

from typing import Any


class MpgError(ValueError):
    """Base class for library errors."""


class InvalidMdpError(MpgError):
    """An MDP could not be constructed or parsed."""


class DimensionMismatchError(MpgError):
    """Array shapes disagree with the MDP / policy they are used with."""


class NonFinitePreferenceError(MpgError):
    """A preference h(a, s) evaluated to NaN or ±inf."""

    def __init__(self, action: int, state: Any):
        super().__init__(f"non-finite preference at action={action}, state={state!r}")
        self.action = action
        self.state = state


class HorizonMismatchError(MpgError):
    """Policy, trajectory or oracle horizons disagree."""


class DivergenceError(MpgError):
    """Training aborted because a parameter left the admissible range.

    ``partial_log`` holds the TrainLog accumulated up to the abort, so
    callers can still report what happened.
    """

    def __init__(self, message: str, partial_log: Any = None):
        super().__init__(message)
        self.partial_log = partial_log


class ConvergenceError(MpgError):
    """An iterative solver hit its iteration cap."""


class IdentityViolationError(MpgError):
    """A checked identity did not hold: signals an implementation bug."""

    def __init__(self, message: str, lhs: Any = None, rhs: Any = None, deviation: float = float("nan")):
        super().__init__(f"{message} (max deviation {deviation:.3e})")
        self.lhs = lhs
        self.rhs = rhs
        self.deviation = deviation


class ConfigError(MpgError):
    """An experiment or training configuration is invalid."""


class EnvStepError(MpgError):
    """An environment was misused (terminal state stepped, malformed layout)."""


class RunCancelledError(MpgError):
    """A sweep stopped early because cancellation was requested."""
