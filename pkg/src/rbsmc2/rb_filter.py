"""Particle filters that propose new states with one EnKF update.

The Rao-Blackwellised weight is log g_enkf(y_t | forecast) + log f(y_t|x) -
log g(y_t|x), where g is the Gaussian observation approximation; the
transition density is never evaluated. The weight0 variant samples the
analytic EnKF posterior and needs the transition density.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import logsumexp

from src.core.errors import TransitionFailureError, UnsupportedModelError
from src.core.gaussian import cho_gain, ensemble_moments, gaussian_logpdf, mvn_sample, symmetrise
from src.core.model import GaussianObs, StateSpaceModel
from src.core.rng import Phase, RngStream
from src.enkf.ensemble_kalman import enkf_update
from src.pf.particle_filter import PfRunResult, WeightedParticles, pf_init
from src.pf.resampling import get_resampler, log_normalise


@dataclass(frozen=True)
class ObsApprox:
    """
    Gaussian observation approximation with a proposal inflation factor.

    ``target`` is the approximation g used in the weight; ``proposal`` has
    R multiplied by ``inflation`` and drives the EnKF update.
    """

    model: StateSpaceModel
    inflation: float = 1.0
    weight_uses_inflated: bool = False

    def __post_init__(self):
        if self.inflation < 1.0:
            raise ValueError(f"inflation must be at least 1, got {self.inflation}")

    def target(self, theta: np.ndarray, forecast_mean: np.ndarray) -> GaussianObs:
        return self.model.gaussian_obs(theta, forecast_mean)

    def proposal(self, theta: np.ndarray, forecast_mean: np.ndarray) -> GaussianObs:
        return self.target(theta, forecast_mean).scaled(self.inflation)

    def weighting(self, theta: np.ndarray, forecast_mean: np.ndarray) -> GaussianObs:
        if self.weight_uses_inflated:
            return self.proposal(theta, forecast_mean)
        return self.target(theta, forecast_mean)


@dataclass
class RbWeightParts:
    """Common EnKF increment plus per-particle log f - log g corrections."""

    common: float
    corrections: np.ndarray

    @property
    def log_weights(self) -> np.ndarray:
        return self.common + self.corrections

    def increment(self) -> float:
        return float(self.common + logsumexp(self.corrections) - np.log(self.corrections.size))


def _rb_weigh(
    model: StateSpaceModel,
    theta: np.ndarray,
    forecast: np.ndarray,
    y: np.ndarray,
    approx: ObsApprox,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, RbWeightParts]:
    out = enkf_update(forecast, y, approx.proposal, theta, rng)
    gobs = approx.weighting(theta, out.forecast_mean)
    common = out.recompute_increment(y, gobs)
    x_new = out.ensemble
    log_g = np.atleast_1d(gaussian_logpdf(np.atleast_1d(y), x_new @ gobs.H.T, gobs.R))
    corrections = model.obs_logpdf(y, x_new, theta) - log_g
    return x_new, RbWeightParts(common, corrections)


def rb_pf_init(
    model: StateSpaceModel,
    theta: np.ndarray,
    n: int,
    y0: np.ndarray,
    approx: ObsApprox,
    stream: RngStream,
) -> Tuple[WeightedParticles, float, RbWeightParts]:
    forecast = model.init_sample(theta, n, stream.generator(0, Phase.INIT))
    x_new, parts = _rb_weigh(model, theta, forecast, y0, approx, stream.generator(0, Phase.PSEUDO_OBS))
    log_normalise(parts.log_weights, 0)
    return WeightedParticles(x_new, parts.log_weights, np.arange(n)), parts.increment(), parts


def rb_pf_step(
    model: StateSpaceModel,
    theta: np.ndarray,
    previous: WeightedParticles,
    y: np.ndarray,
    t: int,
    approx: ObsApprox,
    stream: RngStream,
    resampler: str = "systematic",
) -> Tuple[WeightedParticles, float, RbWeightParts]:
    """
    Resample, forecast through the transition, move with one EnKF update and
    weight with the Rao-Blackwellised factorisation.
    """
    n = previous.n
    idx = get_resampler(resampler)(previous.normalised_weights(t - 1), n, stream.generator(t, Phase.RESAMPLE))
    try:
        forecast = model.transition_sample(previous.particles[idx], theta, stream.generator(t, Phase.FORECAST))
    except TransitionFailureError as exc:
        exc.time_index = t
        raise
    x_new, parts = _rb_weigh(model, theta, forecast, y, approx, stream.generator(t, Phase.PSEUDO_OBS))
    log_normalise(parts.log_weights, t)
    return WeightedParticles(x_new, parts.log_weights, idx), parts.increment(), parts


def rb_pf_run(
    model: StateSpaceModel,
    theta: np.ndarray,
    n: int,
    ys: np.ndarray,
    approx: ObsApprox,
    stream: RngStream,
    resampler: str = "systematic",
) -> PfRunResult:
    ys = np.asarray(ys, dtype=float).reshape(-1, model.d_y)
    particles, inc, _ = rb_pf_init(model, theta, n, ys[0], approx, stream)
    increments = [inc]
    for t in range(1, ys.shape[0]):
        particles, inc, _ = rb_pf_step(model, theta, particles, ys[t], t, approx, stream, resampler)
        increments.append(inc)
    return PfRunResult(float(np.sum(increments)), particles, increments)


def enkf_posterior(
    forecast_mean: np.ndarray,
    forecast_cov: np.ndarray,
    y: np.ndarray,
    obs: GaussianObs,
) -> Tuple[np.ndarray, np.ndarray]:
    """Analytic Gaussian update of the forecast moments."""
    innovation_cov = symmetrise(obs.H @ forecast_cov @ obs.H.T + obs.R)
    gain = cho_gain(forecast_cov @ obs.H.T, innovation_cov)
    mean = forecast_mean + gain @ (np.atleast_1d(y) - obs.H @ forecast_mean)
    cov = symmetrise(forecast_cov - gain @ innovation_cov @ gain.T)
    return mean, cov


def enkf_proposal_weight0(
    model: StateSpaceModel,
    theta: np.ndarray,
    x_prev: np.ndarray,
    x_new: np.ndarray,
    forecast: np.ndarray,
    y: np.ndarray,
    approx: ObsApprox,
) -> np.ndarray:
    """log p(x_new | x_prev) + log f(y | x_new) - log g_enkf(x_new | forecast, y)."""
    if not model.has_transition_density:
        raise UnsupportedModelError(f"{model.name} has no transition density; weight0 is unavailable")
    mean, cov = ensemble_moments(forecast)
    post_mean, post_cov = enkf_posterior(mean, cov, y, approx.proposal(theta, mean))
    log_q = np.atleast_1d(gaussian_logpdf(np.atleast_2d(x_new), post_mean, post_cov))
    return model.transition_logpdf(x_new, x_prev, theta) + model.obs_logpdf(y, x_new, theta) - log_q


def weighted_enkf_pf_step(
    model: StateSpaceModel,
    theta: np.ndarray,
    previous: WeightedParticles,
    y: np.ndarray,
    t: int,
    approx: ObsApprox,
    stream: RngStream,
    resampler: str = "multinomial",
) -> Tuple[WeightedParticles, float]:
    """Sample x_t from the analytic EnKF posterior and weight with weight0."""
    if not model.has_transition_density:
        raise UnsupportedModelError(f"{model.name} has no transition density; weight0 is unavailable")
    n = previous.n
    idx = get_resampler(resampler)(previous.normalised_weights(t - 1), n, stream.generator(t, Phase.RESAMPLE))
    x_prev = previous.particles[idx]
    forecast = model.transition_sample(x_prev, theta, stream.generator(t, Phase.FORECAST))

    mean, cov = ensemble_moments(forecast)
    post_mean, post_cov = enkf_posterior(mean, cov, y, approx.proposal(theta, mean))
    x_new = mvn_sample(post_mean, post_cov, stream.generator(t, Phase.PSEUDO_OBS), size=n)

    log_w = enkf_proposal_weight0(model, theta, x_prev, x_new, forecast, y, approx)
    _, log_total = log_normalise(log_w, t)
    return WeightedParticles(x_new, log_w, idx), log_total - np.log(n)


def weighted_enkf_pf_run(model, theta, n, ys, approx: ObsApprox, stream: RngStream) -> PfRunResult:
    ys = np.asarray(ys, dtype=float).reshape(-1, model.d_y)
    particles, inc = pf_init(model, theta, n, ys[0], stream)
    increments = [inc]
    for t in range(1, ys.shape[0]):
        particles, inc = weighted_enkf_pf_step(model, theta, particles, ys[t], t, approx, stream)
        increments.append(inc)
    return PfRunResult(float(np.sum(increments)), particles, increments)
