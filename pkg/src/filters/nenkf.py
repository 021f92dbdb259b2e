"""Nested EnKF: parameter particles weighted by per-particle EnKF likelihoods."""
from typing import Optional

import numpy as np

from src.core.rng import RngStream
from src.enkf.ensemble_kalman import ObsLike, default_obs_builder, enkf_init, enkf_step
from src.filters.base import ParameterFilter


class NestedEnKF(ParameterFilter):
    """
    Each parameter particle carries an EnKF ensemble; mutations are eMCMC
    (optionally delayed-acceptance) moves and N grows by weight-one exchange.
    """

    name = "nenkf"

    def __init__(self, model, m, n, obs: Optional[ObsLike] = None, **kwargs):
        super().__init__(model, m, n, **kwargs)
        self.obs = obs if obs is not None else default_obs_builder(model)

    def init_state(self, theta, n, y0, stream: RngStream):
        out = enkf_init(self.model, theta, n, y0, self.obs, stream)
        return out.ensemble, out.log_lik_increment

    def step_state(self, theta, state, y, t, stream: RngStream):
        out = enkf_step(self.model, theta, state, y, t, self.obs, stream)
        return out.ensemble, out.log_lik_increment

    def state_mean(self, state: np.ndarray) -> np.ndarray:
        return state.mean(axis=0)
