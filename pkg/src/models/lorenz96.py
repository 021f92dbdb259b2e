"""Stochastic Lorenz-96 system observed in every component."""
from typing import Optional

import numpy as np

from src.core.distributions import GammaPrior
from src.core.gaussian import gaussian_logpdf
from src.core.model import GaussianObs, theta_columns
from src.models.sde import SdeModel

LORENZ_PRIOR = GammaPrior(shapes=(4.0, 4.0, 6.0, 16.0), rates=(4.0, 4.0, 2.0, 2.0))
LORENZ_TRUE_THETA = np.array([1.0, 1.0, 8.0, np.sqrt(10.0)])


class Lorenz96Model(SdeModel):
    """
    dX_i = [theta1 (X_{i+1} - X_{i-2}) X_{i-1} - theta2 X_i + theta3] dt + theta4 dW_i

    Indices are cyclic. Observations are y ~ N(x, obs_var * I).
    """

    name = "lorenz96"
    param_names = ["advection", "damping", "forcing", "noise_scale"]

    def __init__(
        self,
        dim: int = 5,
        dt: float = 5e-3,
        obs_interval: float = 0.2,
        obs_var: float = 25.0,
        prior: GammaPrior = LORENZ_PRIOR,
    ):
        if dim < 4:
            raise ValueError(f"Lorenz-96 needs at least 4 components, got {dim}")
        self.d_x = dim
        self.d_y = dim
        super().__init__(prior, np.zeros(dim))
        self.dt = dt
        self.obs_interval = obs_interval
        self.obs_var = obs_var

    @property
    def default_theta(self) -> np.ndarray:
        return LORENZ_TRUE_THETA.copy()

    def drift(self, x, theta):
        th = theta_columns(theta, x.shape[0])
        ahead = np.roll(x, -1, axis=1)
        behind = np.roll(x, 1, axis=1)
        behind2 = np.roll(x, 2, axis=1)
        return th[:, :1] * (ahead - behind2) * behind - th[:, 1:2] * x + th[:, 2:3]

    def diffusion(self, x, theta):
        th = theta_columns(theta, x.shape[0])
        return np.broadcast_to(th[:, 3:4] ** 2, x.shape).copy()

    @property
    def has_linear_gaussian_obs(self) -> bool:
        return True

    def gaussian_obs(self, theta, forecast_mean: Optional[np.ndarray] = None) -> GaussianObs:
        return GaussianObs(np.eye(self.d_x), self.obs_var * np.eye(self.d_x))

    def obs_logpdf(self, y, x, theta):
        x = np.atleast_2d(x)
        return np.atleast_1d(gaussian_logpdf(np.asarray(y, dtype=float), x, self.obs_var * np.eye(self.d_x)))

    def obs_sample(self, x, theta, rng):
        x = np.atleast_2d(x)
        return x + np.sqrt(self.obs_var) * rng.standard_normal(x.shape)

    def describe(self) -> dict:
        info = super().describe()
        info["dim"] = self.d_x
        return info
