"""Stochastic-update ensemble Kalman filter and its likelihood increment."""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from src.core.errors import TransitionFailureError
from src.core.gaussian import cho_gain, ensemble_moments, gaussian_logpdf, mvn_sample, symmetrise
from src.core.model import GaussianObs, StateSpaceModel
from src.core.rng import Phase, RngStream

ObsBuilder = Callable[[np.ndarray, np.ndarray], GaussianObs]
ObsLike = Union[GaussianObs, ObsBuilder]


@dataclass
class EnkfStepOutput:
    """Updated ensemble plus the forecast moments that produced it."""

    ensemble: np.ndarray
    forecast: np.ndarray
    forecast_mean: np.ndarray
    forecast_cov: np.ndarray
    obs: GaussianObs
    log_lik_increment: float

    def innovation_cov(self, obs: Optional[GaussianObs] = None) -> np.ndarray:
        obs = obs or self.obs
        return symmetrise(obs.H @ self.forecast_cov @ obs.H.T + obs.R)

    def recompute_increment(self, y: np.ndarray, obs: Optional[GaussianObs] = None) -> float:
        """log N(y; H mu, H Sigma H' + R) from the stored forecast moments."""
        obs = obs or self.obs
        return gaussian_logpdf(np.atleast_1d(y), obs.H @ self.forecast_mean, self.innovation_cov(obs))


@dataclass
class EnkfRunResult:
    loglik: float
    ensemble: np.ndarray
    increments: List[float] = field(default_factory=list)


def default_obs_builder(model: StateSpaceModel) -> ObsBuilder:
    return lambda theta, forecast_mean: model.gaussian_obs(theta, forecast_mean)


def resolve_obs(obs: ObsLike, theta: np.ndarray, forecast_mean: np.ndarray) -> GaussianObs:
    if isinstance(obs, GaussianObs):
        return obs
    return obs(theta, forecast_mean)


def kalman_gain(sigma_f: np.ndarray, obs: GaussianObs) -> np.ndarray:
    """K = Sigma_f H' (H Sigma_f H' + R)^-1 via a Cholesky solve."""
    sigma_f = np.atleast_2d(sigma_f)
    innovation_cov = symmetrise(obs.H @ sigma_f @ obs.H.T + obs.R)
    return cho_gain(sigma_f @ obs.H.T, innovation_cov)


def enkf_update(
    forecast: np.ndarray,
    y: np.ndarray,
    obs: ObsLike,
    theta: np.ndarray,
    rng: np.random.Generator,
) -> EnkfStepOutput:
    """Shift each forecast member by K (y - y_tilde) with y_tilde ~ N(Hx, R)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mean, cov = ensemble_moments(forecast)
    gobs = resolve_obs(obs, theta, mean)

    gain = kalman_gain(cov, gobs)
    noise = mvn_sample(np.zeros(gobs.d_y), gobs.R, rng, size=forecast.shape[0])
    pseudo = forecast @ gobs.H.T + noise
    updated = forecast + (y - pseudo) @ gain.T

    increment = gaussian_logpdf(y, gobs.H @ mean, symmetrise(gobs.H @ cov @ gobs.H.T + gobs.R))
    return EnkfStepOutput(updated, forecast, mean, cov, gobs, increment)


def enkf_init(
    model: StateSpaceModel,
    theta: np.ndarray,
    n: int,
    y0: np.ndarray,
    obs: ObsLike,
    stream: RngStream,
) -> EnkfStepOutput:
    """Draw the initial ensemble from p_0 and assimilate y_0."""
    forecast = model.init_sample(theta, n, stream.generator(0, Phase.INIT))
    return enkf_update(forecast, y0, obs, theta, stream.generator(0, Phase.PSEUDO_OBS))


def enkf_step(
    model: StateSpaceModel,
    theta: np.ndarray,
    ensemble: np.ndarray,
    y: np.ndarray,
    t: int,
    obs: ObsLike,
    stream: RngStream,
) -> EnkfStepOutput:
    """Forecast through the transition, then assimilate y_t."""
    try:
        forecast = model.transition_sample(ensemble, theta, stream.generator(t, Phase.FORECAST))
    except TransitionFailureError as exc:
        exc.time_index = t
        raise
    return enkf_update(forecast, y, obs, theta, stream.generator(t, Phase.PSEUDO_OBS))


def enkf_run(
    model: StateSpaceModel,
    theta: np.ndarray,
    n: int,
    ys: np.ndarray,
    stream: RngStream,
    obs: Optional[ObsLike] = None,
) -> EnkfRunResult:
    """Filter y_{0:T} from scratch and sum the increments."""
    obs = obs if obs is not None else default_obs_builder(model)
    ys = np.asarray(ys, dtype=float).reshape(-1, model.d_y)

    out = enkf_init(model, theta, n, ys[0], obs, stream)
    increments = [out.log_lik_increment]
    for t in range(1, ys.shape[0]):
        out = enkf_step(model, theta, out.ensemble, ys[t], t, obs, stream)
        increments.append(out.log_lik_increment)
    return EnkfRunResult(float(np.sum(increments)), out.ensemble, increments)
