"""Augmented EnKF: one joint ensemble over (state, log-parameters)."""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from src.core.errors import TransitionFailureError
from src.core.gaussian import cho_gain, ensemble_moments, gaussian_logpdf, mvn_sample, symmetrise
from src.core.model import GaussianObs, StateSpaceModel
from src.core.rng import Phase, RngStream
from src.enkf.liu_west import LiuWestConfig, liu_west_shrink
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass
class AugmentedEnsemble:
    states: np.ndarray
    log_params: np.ndarray
    log_lik_increment: float = 0.0

    @property
    def n(self) -> int:
        return self.states.shape[0]


@dataclass
class AenkfRunResult:
    ensemble: AugmentedEnsemble
    # Log-parameter cloud after assimilating each y_t
    param_history: List[np.ndarray] = field(default_factory=list)
    state_means: List[np.ndarray] = field(default_factory=list)
    increments: List[float] = field(default_factory=list)


def augmented_obs(obs: GaussianObs, d_theta: int) -> GaussianObs:
    """H_z = [H, 0] so only the state block is observed."""
    return GaussianObs(np.hstack([obs.H, np.zeros((obs.d_y, d_theta))]), obs.R)


def _joint_update(
    model: StateSpaceModel,
    states: np.ndarray,
    log_params: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
) -> AugmentedEnsemble:
    d_x = states.shape[1]
    joint = np.hstack([states, log_params])
    mean, cov = ensemble_moments(joint)
    # H does not depend on theta; R is built at the ensemble-mean parameters
    obs = model.gaussian_obs(np.exp(mean[d_x:]), mean[:d_x])
    obs_z = augmented_obs(obs, log_params.shape[1])

    innovation_cov = symmetrise(obs_z.H @ cov @ obs_z.H.T + obs_z.R)
    gain = cho_gain(cov @ obs_z.H.T, innovation_cov)
    pseudo = states @ obs.H.T + mvn_sample(np.zeros(obs.d_y), obs.R, rng, size=states.shape[0])
    updated = joint + (np.atleast_1d(y) - pseudo) @ gain.T
    increment = gaussian_logpdf(np.atleast_1d(y), obs_z.H @ mean, innovation_cov)
    return AugmentedEnsemble(updated[:, :d_x], updated[:, d_x:], increment)


def aenkf_init(model: StateSpaceModel, n: int, y0: np.ndarray, stream: RngStream) -> AugmentedEnsemble:
    """Draw (x_0, log theta) from the priors and assimilate y_0."""
    log_params = model.prior.sample(stream.generator(0, Phase.PRIOR), n)
    states = model.init_sample(np.exp(log_params), n, stream.generator(0, Phase.INIT))
    return _joint_update(model, states, log_params, y0, stream.generator(0, Phase.PSEUDO_OBS))


def aenkf_step(
    model: StateSpaceModel,
    ensemble: AugmentedEnsemble,
    y: np.ndarray,
    t: int,
    cfg: LiuWestConfig,
    stream: RngStream,
) -> AugmentedEnsemble:
    """Liu-West move on log theta, per-member transition, joint stochastic update."""
    log_params = liu_west_shrink(ensemble.log_params, cfg, stream.generator(t, Phase.LIU_WEST))
    try:
        states = model.transition_sample(ensemble.states, np.exp(log_params), stream.generator(t, Phase.FORECAST))
    except TransitionFailureError as exc:
        exc.time_index = t
        raise
    return _joint_update(model, states, log_params, y, stream.generator(t, Phase.PSEUDO_OBS))


def aenkf_run(
    model: StateSpaceModel,
    n: int,
    ys: np.ndarray,
    cfg: LiuWestConfig,
    stream: RngStream,
) -> AenkfRunResult:
    ys = np.asarray(ys, dtype=float).reshape(-1, model.d_y)
    ensemble = aenkf_init(model, n, ys[0], stream)
    result = AenkfRunResult(ensemble)
    for t in range(ys.shape[0]):
        if t > 0:
            ensemble = aenkf_step(model, ensemble, ys[t], t, cfg, stream)
        result.param_history.append(ensemble.log_params.copy())
        result.state_means.append(ensemble.states.mean(axis=0))
        result.increments.append(ensemble.log_lik_increment)
    result.ensemble = ensemble
    logger.info(f"AEnKF finished: N={n}, T={ys.shape[0] - 1}, h={cfg.h:.6f}")
    return result
