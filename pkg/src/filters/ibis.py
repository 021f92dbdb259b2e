"""IBIS with the exact Kalman likelihood, the oracle for the EnKF-based filters."""
import numpy as np

from src.core.kalman import KalmanState, kalman_init, kalman_step
from src.core.rng import RngStream
from src.filters.base import ParameterFilter


class KalmanIbis(ParameterFilter):
    """Resample-move over parameters where each particle carries exact Kalman moments."""

    name = "kf-ibis"
    supports_growth = False

    def __init__(self, model, m, n: int = 1, **kwargs):
        # Fails early for models without an exact Gaussian transition
        model.linear_gaussian_transition(model.default_theta)
        super().__init__(model, m, n, **kwargs)

    def init_state(self, theta, n, y0, stream: RngStream):
        return kalman_init(self.model, theta, y0)

    def step_state(self, theta, state, y, t, stream: RngStream):
        return kalman_step(self.model, theta, state, y)

    def state_mean(self, state: KalmanState) -> np.ndarray:
        return state.mean
