"""Exact Kalman filter for linear-Gaussian models, used as a likelihood oracle."""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from src.core.errors import UnsupportedModelError
from src.core.gaussian import cho_gain, gaussian_logpdf, symmetrise
from src.core.model import GaussianObs, StateSpaceModel


@dataclass
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray


@dataclass
class KalmanResult:
    loglik: float
    means: List[np.ndarray] = field(default_factory=list)
    covs: List[np.ndarray] = field(default_factory=list)
    increments: List[float] = field(default_factory=list)


def kalman_update(state: KalmanState, y: np.ndarray, obs: GaussianObs) -> Tuple[KalmanState, float]:
    """Condition N(mean, cov) on y ~ N(Hx, R); returns the posterior and log p(y)."""
    H, R = obs.H, obs.R
    y = np.atleast_1d(np.asarray(y, dtype=float))
    predicted_y = H @ state.mean
    innovation_cov = symmetrise(H @ state.cov @ H.T + R)

    increment = gaussian_logpdf(y, predicted_y, innovation_cov)
    gain = cho_gain(state.cov @ H.T, innovation_cov)
    mean = state.mean + gain @ (y - predicted_y)
    cov = symmetrise(state.cov - gain @ innovation_cov @ gain.T)
    return KalmanState(mean, cov), increment


def _exact_obs(model: StateSpaceModel, theta: np.ndarray) -> GaussianObs:
    if not model.has_linear_gaussian_obs:
        raise UnsupportedModelError(f"{model.name} observation density is not linear-Gaussian")
    return model.gaussian_obs(theta)


def kalman_init(model: StateSpaceModel, theta: np.ndarray, y0: np.ndarray) -> Tuple[KalmanState, float]:
    """Filtering distribution at t=0 and the increment log p(y_0)."""
    mean, cov = model.init_moments(theta)
    return kalman_update(KalmanState(mean, cov), y0, _exact_obs(model, theta))


def kalman_step(
    model: StateSpaceModel,
    theta: np.ndarray,
    state: KalmanState,
    y: np.ndarray,
) -> Tuple[KalmanState, float]:
    """Predict one observation interval ahead, then update on y."""
    F, offset, Q = model.linear_gaussian_transition(theta)
    predicted = KalmanState(F @ state.mean + offset, symmetrise(F @ state.cov @ F.T + Q))
    return kalman_update(predicted, y, _exact_obs(model, theta))


def kalman_filter_exact(model: StateSpaceModel, theta: np.ndarray, ys: np.ndarray) -> KalmanResult:
    """
    Exact log observed-data likelihood and filtering moments.

    Args:
        model: Model with a linear-Gaussian transition and observation density
        theta: Natural-scale parameters
        ys: Observations, shape (T+1, d_y)

    Returns:
        KalmanResult with the total log-likelihood and per-step quantities
    """
    ys = np.asarray(ys, dtype=float).reshape(-1, model.d_y)

    result = KalmanResult(loglik=0.0)
    state, inc = kalman_init(model, theta, ys[0])
    for t in range(ys.shape[0]):
        if t > 0:
            state, inc = kalman_step(model, theta, state, ys[t])
        result.means.append(state.mean)
        result.covs.append(state.cov)
        result.increments.append(inc)
    result.loglik = float(np.sum(result.increments))
    return result
