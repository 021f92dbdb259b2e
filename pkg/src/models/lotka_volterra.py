"""Stochastic Lotka-Volterra predator-prey model with prey-only counts."""
from typing import Optional

import numpy as np
from scipy import stats

from src.core.distributions import GammaPrior
from src.core.model import GaussianObs, theta_columns
from src.models.sde import SdeModel

LV_PRIOR = GammaPrior(shapes=(2.0, 20.0, 2.0), rates=(4.0, 1e4, 4.0))
LV_TRUE_THETA = np.array([0.5, 0.0025, 0.3])
LV_H = np.array([[1.0, 0.0]])


class LotkaVolterraModel(SdeModel):
    """
    Prey/predator diffusion; y ~ N(Hx, Hx) with H = (1, 0).

    Args:
        x0: Initial (prey, predator)
        dt: Euler-Maruyama step
        obs_interval: Time between observations
        obs_floor: Floor applied to observation variances
    """

    name = "lv"
    param_names = ["prey_birth", "interaction", "predator_death"]
    d_x = 2
    d_y = 1
    floor_idx = (0, 1)

    def __init__(
        self,
        x0=(50.0, 50.0),
        dt: float = 0.2,
        obs_interval: float = 2.0,
        obs_floor: float = 1e-2,
        prior: GammaPrior = LV_PRIOR,
    ):
        super().__init__(prior, np.asarray(x0, dtype=float))
        self.dt = dt
        self.obs_interval = obs_interval
        self.obs_floor = obs_floor

    @property
    def default_theta(self) -> np.ndarray:
        return LV_TRUE_THETA.copy()

    def drift(self, x, theta):
        th = theta_columns(theta, x.shape[0])
        prey, pred = x[:, 0], x[:, 1]
        meet = th[:, 1] * prey * pred
        return np.column_stack([th[:, 0] * prey - meet, meet - th[:, 2] * pred])

    def diffusion(self, x, theta):
        th = theta_columns(theta, x.shape[0])
        prey, pred = x[:, 0], x[:, 1]
        meet = th[:, 1] * prey * pred
        b = np.empty((x.shape[0], 2, 2))
        b[:, 0, 0] = th[:, 0] * prey + meet
        b[:, 0, 1] = b[:, 1, 0] = -meet
        b[:, 1, 1] = meet + th[:, 2] * pred
        return b

    def obs_logpdf(self, y, x, theta):
        x = np.atleast_2d(x)
        mean = x @ LV_H[0]
        var = np.maximum(mean, self.obs_floor)
        return stats.norm.logpdf(float(np.ravel(y)[0]), loc=mean, scale=np.sqrt(var))

    def obs_sample(self, x, theta, rng):
        x = np.atleast_2d(x)
        mean = x @ LV_H[0]
        return (mean + np.sqrt(np.maximum(mean, self.obs_floor)) * rng.standard_normal(x.shape[0]))[:, None]

    def gaussian_obs(self, theta, forecast_mean: Optional[np.ndarray] = None) -> GaussianObs:
        """Plug-in approximation R = H mu_hat, floored."""
        if forecast_mean is None:
            raise ValueError("LV observation approximation needs the forecast mean")
        r = max(float(LV_H[0] @ np.asarray(forecast_mean, dtype=float)), self.obs_floor)
        return GaussianObs(LV_H, np.array([[r]]))
