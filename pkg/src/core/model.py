"""State-space model abstraction shared by every filter."""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.core.distributions import GammaPrior
from src.core.errors import UnsupportedModelError


@dataclass(frozen=True)
class GaussianObs:
    """Linear-Gaussian observation model y ~ N(Hx, R), or an approximation of one."""

    H: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if R.shape != (H.shape[0], H.shape[0]):
            raise ValueError(f"R shape {R.shape} does not match H rows {H.shape[0]}")
        if not np.allclose(R, R.T):
            raise ValueError("R must be symmetric")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)

    @property
    def d_y(self) -> int:
        return self.H.shape[0]

    @property
    def d_x(self) -> int:
        return self.H.shape[1]

    def scaled(self, factor: float) -> "GaussianObs":
        """Same H with R multiplied by ``factor``."""
        return GaussianObs(self.H, factor * self.R)


def theta_columns(theta: np.ndarray, n: int) -> np.ndarray:
    """Broadcast natural-scale theta of shape (d,) or (n, d) to (n, d)."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        return np.broadcast_to(theta, (n, theta.shape[0]))
    if theta.shape[0] != n:
        raise ValueError(f"theta has {theta.shape[0]} rows, expected {n}")
    return theta


class StateSpaceModel(ABC):
    """
    A state-space model with positive parameters.

    All methods take natural-scale ``theta`` of shape (d_theta,) or, for
    per-member parameters, (n, d_theta). States are (n, d_x) arrays.
    """

    name: str = "model"
    param_names: List[str] = []
    d_x: int = 1
    d_y: int = 1
    # Time between observations and the Euler-Maruyama step inside it
    obs_interval: float = 1.0
    dt: float = 1.0

    def __init__(self, prior: GammaPrior, x0: np.ndarray):
        if prior.dim != len(self.param_names):
            raise ValueError(f"{self.name}: prior has {prior.dim} components, expected {len(self.param_names)}")
        self.prior = prior
        self.x0 = np.asarray(x0, dtype=float)
        # Counts transition-density evaluations; the bootstrap and RB filters must leave it at zero
        self.transition_density_calls = 0

    @property
    def d_theta(self) -> int:
        return len(self.param_names)

    @property
    def n_substeps(self) -> int:
        return max(1, int(round(self.obs_interval / self.dt)))

    @property
    def default_theta(self) -> np.ndarray:
        """Parameter value used for synthetic data when none is given."""
        return self.prior.mean

    # --- sampling -------------------------------------------------------

    def init_sample(self, theta: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n initial states; the default is a point mass at x0."""
        return np.tile(self.x0, (n, 1))

    @abstractmethod
    def transition_sample(self, x: np.ndarray, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Propagate states across one observation interval."""

    @abstractmethod
    def obs_logpdf(self, y: np.ndarray, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """log f(y | x) for each row of x, shape (n,)."""

    @abstractmethod
    def obs_sample(self, x: np.ndarray, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw an observation for each row of x, shape (n, d_y)."""

    # --- Gaussian structure ---------------------------------------------

    @property
    def has_linear_gaussian_obs(self) -> bool:
        """True when f(y|x) is exactly N(y; Hx, R) with R independent of x."""
        return False

    def gaussian_obs(self, theta: np.ndarray, forecast_mean: Optional[np.ndarray] = None) -> GaussianObs:
        """Gaussian observation model or its forecast-mean plug-in approximation."""
        raise UnsupportedModelError(f"{self.name} has no Gaussian observation structure")

    @property
    def has_transition_density(self) -> bool:
        return False

    def transition_logpdf(self, x_new: np.ndarray, x_prev: np.ndarray, theta: np.ndarray) -> np.ndarray:
        raise UnsupportedModelError(f"{self.name} has no tractable transition density")

    def linear_gaussian_transition(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(F, offset, Q) with x_t | x_{t-1} ~ N(F x + offset, Q)."""
        raise UnsupportedModelError(f"{self.name} has no exact Gaussian transition")

    def init_moments(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of p_0, for models with a Gaussian initial law."""
        raise UnsupportedModelError(f"{self.name} has no Gaussian initial distribution")

    def describe(self) -> dict:
        return {
            "name": self.name,
            "param_names": list(self.param_names),
            "d_x": self.d_x,
            "d_y": self.d_y,
            "obs_interval": self.obs_interval,
            "dt": self.dt,
            "n_substeps": self.n_substeps,
            "prior_shapes": list(self.prior.shapes),
            "prior_rates": list(self.prior.rates),
        }
