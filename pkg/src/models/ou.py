"""Ornstein-Uhlenbeck model with its closed-form transition."""
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from src.core.distributions import GammaPrior
from src.core.model import GaussianObs, StateSpaceModel, theta_columns

OU_PRIOR = GammaPrior(shapes=(2.0, 5.0, 2.0), rates=(2.0, 3.0, 5.0))
OU_TRUE_THETA = np.array([1.0, 2.0, 1.0])


def ou_moments(x: np.ndarray, theta: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean and variance of x_{t+dt} | x_t for dX = theta1 (theta2 - X) dt + theta3 dW.

    ``theta`` is (3,) or (n, 3); x broadcasts against its rows.
    """
    theta = np.asarray(theta, dtype=float)
    rate, level, scale = theta[..., 0], theta[..., 1], theta[..., 2]
    decay = np.exp(-rate * dt)
    mean = x * decay + level * (1.0 - decay)
    var = scale ** 2 * (1.0 - np.exp(-2.0 * rate * dt)) / (2.0 * rate)
    return mean, var


class OuModel(StateSpaceModel):
    """
    Scalar OU process observed with Gaussian noise at unit intervals.

    Args:
        x0: Initial state mean
        x0_var: Initial state variance (0 gives a point mass)
        obs_var: Observation noise variance R
        nonlinear_obs: Use f = N(y; x, |x| + obs_var) instead of N(y; x, obs_var)
        obs_floor: Floor for plug-in observation variances
    """

    name = "ou"
    param_names = ["rate", "level", "scale"]
    d_x = 1
    d_y = 1
    obs_interval = 1.0
    dt = 1.0

    def __init__(
        self,
        x0: float = 10.0,
        x0_var: float = 0.0,
        obs_var: float = 0.1,
        nonlinear_obs: bool = False,
        obs_floor: float = 1e-2,
        prior: GammaPrior = OU_PRIOR,
    ):
        super().__init__(prior, np.array([x0]))
        self.x0_var = float(x0_var)
        self.obs_var = float(obs_var)
        self.nonlinear_obs = nonlinear_obs
        self.obs_floor = obs_floor

    @property
    def default_theta(self) -> np.ndarray:
        return OU_TRUE_THETA.copy()

    def init_sample(self, theta, n, rng):
        if self.x0_var == 0.0:
            return np.tile(self.x0, (n, 1))
        return self.x0 + np.sqrt(self.x0_var) * rng.standard_normal((n, 1))

    def init_moments(self, theta):
        return self.x0.copy(), np.array([[self.x0_var]])

    def transition_sample(self, x, theta, rng):
        x = np.atleast_2d(x)
        th = theta_columns(theta, x.shape[0])
        mean, var = ou_moments(x[:, 0], th, self.obs_interval)
        return (mean + np.sqrt(var) * rng.standard_normal(x.shape[0]))[:, None]

    @property
    def has_transition_density(self) -> bool:
        return True

    def transition_logpdf(self, x_new, x_prev, theta):
        self.transition_density_calls += 1
        x_prev = np.atleast_2d(x_prev)
        th = theta_columns(theta, x_prev.shape[0])
        mean, var = ou_moments(x_prev[:, 0], th, self.obs_interval)
        return stats.norm.logpdf(np.atleast_2d(x_new)[:, 0], loc=mean, scale=np.sqrt(var))

    def linear_gaussian_transition(self, theta):
        theta = np.asarray(theta, dtype=float)
        decay = np.exp(-theta[0] * self.obs_interval)
        _, var = ou_moments(0.0, theta, self.obs_interval)
        return np.array([[decay]]), np.array([theta[1] * (1.0 - decay)]), np.array([[var]])

    def _obs_var(self, x: np.ndarray) -> np.ndarray:
        if self.nonlinear_obs:
            return np.maximum(np.abs(x[:, 0]) + self.obs_var, self.obs_floor)
        return np.full(x.shape[0], self.obs_var)

    def obs_logpdf(self, y, x, theta):
        x = np.atleast_2d(x)
        y = np.asarray(y, dtype=float).reshape(-1)[0]
        return stats.norm.logpdf(y, loc=x[:, 0], scale=np.sqrt(self._obs_var(x)))

    def obs_sample(self, x, theta, rng):
        x = np.atleast_2d(x)
        return (x[:, 0] + np.sqrt(self._obs_var(x)) * rng.standard_normal(x.shape[0]))[:, None]

    @property
    def has_linear_gaussian_obs(self) -> bool:
        return not self.nonlinear_obs

    def gaussian_obs(self, theta, forecast_mean: Optional[np.ndarray] = None) -> GaussianObs:
        if not self.nonlinear_obs:
            return GaussianObs(np.array([[1.0]]), np.array([[self.obs_var]]))
        if forecast_mean is None:
            raise ValueError("Plug-in observation variance needs the forecast mean")
        var = max(abs(float(np.ravel(forecast_mean)[0])) + self.obs_var, self.obs_floor)
        return GaussianObs(np.array([[1.0]]), np.array([[var]]))
