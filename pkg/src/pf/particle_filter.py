"""Particle filter over latent states with the unbiased likelihood estimator."""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from src.core.errors import TransitionFailureError
from src.core.model import StateSpaceModel
from src.core.rng import Phase, RngStream
from src.pf.resampling import get_resampler, log_normalise


@dataclass
class WeightedParticles:
    """Particle cloud with unnormalised log-weights and the last ancestor indices."""

    particles: np.ndarray
    log_weights: np.ndarray
    ancestors: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    def normalised_weights(self, time_index: int = -1) -> np.ndarray:
        weights, _ = log_normalise(self.log_weights, time_index)
        return weights

    def weighted_mean(self) -> np.ndarray:
        return self.normalised_weights() @ self.particles


class Proposal:
    """Proposal q(x_t | x_{t-1}, y_t); subclasses overriding ``sample`` must set bootstrap=False."""

    bootstrap = True

    def __init__(self, model: StateSpaceModel):
        self.model = model

    def sample(self, theta, x_prev, y, rng: np.random.Generator) -> np.ndarray:
        return self.model.transition_sample(x_prev, theta, rng)

    def logpdf(self, x_new, x_prev, y, theta) -> np.ndarray:
        raise NotImplementedError("Bootstrap weights never evaluate the proposal density")


class BootstrapProposal(Proposal):
    """q = p; weights reduce to the observation density."""


@dataclass
class PfRunResult:
    loglik: float
    particles: WeightedParticles
    increments: List[float] = field(default_factory=list)


def _increment(log_weights: np.ndarray, time_index: int) -> float:
    _, log_total = log_normalise(log_weights, time_index)
    return log_total - np.log(log_weights.size)


def pf_init(
    model: StateSpaceModel,
    theta: np.ndarray,
    n: int,
    y0: np.ndarray,
    stream: RngStream,
) -> Tuple[WeightedParticles, float]:
    """Draw x_0 ~ p_0 and weight by f(y_0 | x_0)."""
    if n < 1:
        raise ValueError(f"Particle count must be at least 1, got {n}")
    x0 = model.init_sample(theta, n, stream.generator(0, Phase.INIT))
    log_w = model.obs_logpdf(y0, x0, theta)
    return WeightedParticles(x0, log_w, np.arange(n)), _increment(log_w, 0)


def pf_step(
    model: StateSpaceModel,
    theta: np.ndarray,
    previous: WeightedParticles,
    y: np.ndarray,
    t: int,
    stream: RngStream,
    proposal: Optional[Proposal] = None,
    resampler: str = "multinomial",
) -> Tuple[WeightedParticles, float]:
    """
    Resample, propagate and weight one step.

    Args:
        model: State-space model
        theta: Natural-scale parameters
        previous: Cloud at t-1 with its unnormalised log-weights
        y: Observation y_t
        t: Time index (t >= 1)
        stream: Stream owned by this filter run; keyed further by (t, phase)
        proposal: Proposal q; bootstrap when None
        resampler: "multinomial" or "systematic"

    Returns:
        (cloud at t, log-likelihood increment)
    """
    proposal = proposal or BootstrapProposal(model)
    n = previous.n
    weights = previous.normalised_weights(t - 1)
    idx = get_resampler(resampler)(weights, n, stream.generator(t, Phase.RESAMPLE))
    x_prev = previous.particles[idx]

    try:
        x_new = proposal.sample(theta, x_prev, y, stream.generator(t, Phase.FORECAST))
    except TransitionFailureError as exc:
        exc.time_index = t
        raise

    log_w = model.obs_logpdf(y, x_new, theta)
    if not proposal.bootstrap:
        log_w = log_w + model.transition_logpdf(x_new, x_prev, theta) - proposal.logpdf(x_new, x_prev, y, theta)

    return WeightedParticles(x_new, log_w, idx), _increment(log_w, t)


def pf_run(
    model: StateSpaceModel,
    theta: np.ndarray,
    n: int,
    ys: np.ndarray,
    stream: RngStream,
    proposal: Optional[Proposal] = None,
    resampler: str = "multinomial",
) -> PfRunResult:
    """Filter y_{0:T}; exp(loglik) is unbiased for p(y_{0:T} | theta)."""
    ys = np.asarray(ys, dtype=float).reshape(-1, model.d_y)
    particles, inc = pf_init(model, theta, n, ys[0], stream)
    increments = [inc]
    for t in range(1, ys.shape[0]):
        particles, inc = pf_step(model, theta, particles, ys[t], t, stream, proposal, resampler)
        increments.append(inc)
    return PfRunResult(float(np.sum(increments)), particles, increments)
