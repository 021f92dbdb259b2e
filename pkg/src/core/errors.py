"""Exception hierarchy for the inference engine."""
from typing import Optional


class InferenceError(Exception):
    """Base class for all engine errors."""


class NumericalError(InferenceError):
    """A computation produced an unusable numerical result."""


class SingularCovarianceError(NumericalError):
    """Cholesky factorisation failed even after jitter escalation."""


class ParticleCollapseError(NumericalError):
    """Every unnormalised weight is zero (log-weight -inf)."""

    def __init__(self, time_index: int, particle_id: Optional[int] = None, message: str = ""):
        self.time_index = time_index
        self.particle_id = particle_id
        where = f"t={time_index}" if particle_id is None else f"t={time_index}, particle={particle_id}"
        super().__init__(f"Particle collapse at {where}{': ' + message if message else ''}")


class TransitionFailureError(NumericalError):
    """The transition sampler returned non-finite values."""

    def __init__(self, member_index: int, time_index: Optional[int] = None):
        self.member_index = member_index
        self.time_index = time_index
        super().__init__(f"Non-finite transition draw for member {member_index} at t={time_index}")


class UnsupportedModelError(InferenceError):
    """The model lacks a capability the requested operation needs."""


class EnsembleSizeError(InferenceError, ValueError):
    """Fewer than two ensemble members where a sample covariance is required."""


class ConfigValidationError(InferenceError):
    """An experiment configuration failed validation."""
