"""Two-node SIR epidemic diffusion with Brownian log infestation rates."""
from typing import Optional

import numpy as np
from scipy import stats

from src.core.distributions import GammaPrior
from src.core.model import GaussianObs, theta_columns
from src.models.sde import SdeModel

SIR_PRIOR = GammaPrior(shapes=(2.0, 2.0, 2.0, 2.0, 2.0), rates=(2.0, 2.0, 2.0, 10.0, 2.0))
SIR_X0 = np.array([4631.0, 240.0, 37413.0, 1400.0, -10.0, -10.5])
# Observes S_j + I_j, i.e. total minus removals at each node
SIR_H = np.array([
    [1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
])


class SirModel(SdeModel):
    """
    State (S1, I1, S2, I2, log beta1, log beta2); y ~ N(Hx, sigma^2 diag(Hx)).

    theta = (removal, pressure 1->2, pressure 2->1, beta volatility, obs scale).
    """

    name = "sir"
    param_names = ["removal", "alpha12", "alpha21", "sigma_beta", "sigma_obs"]
    d_x = 6
    d_y = 2
    floor_idx = (0, 1, 2, 3)

    def __init__(
        self,
        x0=SIR_X0,
        dt: float = 0.1,
        obs_interval: float = 1.0,
        obs_floor: float = 1e-2,
        prior: GammaPrior = SIR_PRIOR,
    ):
        super().__init__(prior, np.asarray(x0, dtype=float))
        self.dt = dt
        self.obs_interval = obs_interval
        self.obs_floor = obs_floor

    def infection_rates(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Infection flow at each node, shape (n, 2)."""
        th = theta_columns(theta, x.shape[0])
        s1, i1, s2, i2 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
        beta1, beta2 = np.exp(x[:, 4]), np.exp(x[:, 5])
        lam1 = beta1 * (i1 + th[:, 2] * i2) * s1
        lam2 = beta2 * (i2 + th[:, 1] * i1) * s2
        return np.column_stack([lam1, lam2])

    def drift(self, x, theta):
        th = theta_columns(theta, x.shape[0])
        lam = self.infection_rates(x, theta)
        a = np.zeros_like(x)
        a[:, 0] = -lam[:, 0]
        a[:, 1] = lam[:, 0] - th[:, 0] * x[:, 1]
        a[:, 2] = -lam[:, 1]
        a[:, 3] = lam[:, 1] - th[:, 0] * x[:, 3]
        return a

    def diffusion(self, x, theta):
        th = theta_columns(theta, x.shape[0])
        lam = self.infection_rates(x, theta)
        b = np.zeros((x.shape[0], 6, 6))
        for node in range(2):
            s, i = 2 * node, 2 * node + 1
            b[:, s, s] = lam[:, node]
            b[:, s, i] = b[:, i, s] = -lam[:, node]
            b[:, i, i] = lam[:, node] + th[:, 0] * x[:, i]
        b[:, 4, 4] = b[:, 5, 5] = th[:, 3] ** 2
        return b

    def _obs_scale(self, mean: np.ndarray, theta: np.ndarray) -> np.ndarray:
        th = theta_columns(theta, mean.shape[0])
        return th[:, 4:5] * np.sqrt(np.maximum(mean, self.obs_floor))

    def obs_logpdf(self, y, x, theta):
        x = np.atleast_2d(x)
        mean = x @ SIR_H.T
        y = np.asarray(y, dtype=float).reshape(1, -1)
        return np.sum(stats.norm.logpdf(y, loc=mean, scale=self._obs_scale(mean, theta)), axis=1)

    def obs_sample(self, x, theta, rng):
        x = np.atleast_2d(x)
        mean = x @ SIR_H.T
        return mean + self._obs_scale(mean, theta) * rng.standard_normal(mean.shape)

    def gaussian_obs(self, theta, forecast_mean: Optional[np.ndarray] = None) -> GaussianObs:
        """Plug-in approximation R = sigma^2 diag(H mu_hat)."""
        if forecast_mean is None:
            raise ValueError("SIR observation approximation needs the forecast mean")
        sigma = float(np.asarray(theta, dtype=float)[4])
        hm = np.maximum(SIR_H @ np.asarray(forecast_mean, dtype=float), self.obs_floor)
        return GaussianObs(SIR_H, sigma ** 2 * np.diag(hm))
