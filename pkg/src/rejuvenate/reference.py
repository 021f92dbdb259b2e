"""Long MCMC chains over log-parameters used as reference posteriors."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from tqdm import tqdm

from src.core.distributions import GammaPrior
from src.core.errors import NumericalError
from src.core.kalman import kalman_filter_exact
from src.core.model import StateSpaceModel
from src.core.rng import Phase, RngStream
from src.enkf.ensemble_kalman import enkf_run
from src.pf.particle_filter import pf_run
from src.rejuvenate.kernels import Evaluator, mh_move
from src.rejuvenate.proposals import MhProposalConfig, proposal_covariance
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass
class Chain:
    """Thinned chain of log-parameters and log-likelihood estimates."""

    phis: np.ndarray
    logliks: np.ndarray
    acceptance_rate: float
    iterations: int
    thin: int = 1

    @property
    def valid(self) -> bool:
        """A chain whose thinned output never moves is not a usable reference."""
        return np.unique(self.phis, axis=0).shape[0] > 1

    def summary(self, n_batches: int = 20) -> dict:
        return {
            "mean": self.phis.mean(axis=0),
            "sd": self.phis.std(axis=0, ddof=1) if self.phis.shape[0] > 1 else np.zeros(self.phis.shape[1]),
            "mcse_mean": batch_means_se(self.phis, n_batches),
            "mcse_sd": batch_means_se(np.abs(self.phis - self.phis.mean(axis=0)), n_batches),
        }


def batch_means_se(samples: np.ndarray, n_batches: int = 20) -> np.ndarray:
    """Monte Carlo standard error of the mean by non-overlapping batch means."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    n_batches = min(n_batches, samples.shape[0])
    if n_batches < 2:
        return np.full(samples.shape[1], np.nan)
    size = samples.shape[0] // n_batches
    batches = samples[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    return batches.std(axis=0, ddof=1) / np.sqrt(n_batches)


def run_mh_chain(
    prior: GammaPrior,
    evaluator: Evaluator,
    phi0: np.ndarray,
    cov: np.ndarray,
    zeta2: float,
    iterations: int,
    stream: RngStream,
    thin: int = 1,
    progress: bool = False,
) -> Chain:
    """
    Random-walk MH from phi0 for ``iterations`` steps.

    Args:
        prior: Log-scale prior
        evaluator: (phi, stream) -> (loglik, state)
        phi0: Starting log-parameters
        cov: Proposal covariance V (scaled by zeta2)
        zeta2: Proposal scale
        iterations: Number of MH steps
        stream: Chain stream; iteration i uses stream.child(Phase.CHAIN, i)
        thin: Keep every ``thin``-th state
        progress: Show a progress bar

    Returns:
        Chain with the thinned states and the acceptance rate
    """
    if iterations < 1:
        raise ValueError(f"iterations must be at least 1, got {iterations}")
    phi = np.asarray(phi0, dtype=float)
    loglik, _ = evaluator(phi, stream.child(Phase.EVALUATE))
    if not np.isfinite(loglik):
        raise NumericalError(f"Chain start has non-finite log-likelihood at {phi.tolist()}")

    kept_phis, kept_logliks = [], []
    accepted = 0
    for i in tqdm(range(iterations), disable=not progress, desc="MCMC"):
        outcome = mh_move(phi, loglik, None, prior, evaluator, cov, zeta2, stream.child(Phase.CHAIN, i))
        phi, loglik = outcome.phi, outcome.loglik
        accepted += outcome.acceptances
        if (i + 1) % thin == 0:
            kept_phis.append(phi.copy())
            kept_logliks.append(loglik)

    rate = accepted / iterations
    logger.info(f"Chain finished: {iterations} iterations, acceptance {rate:.3f}")
    return Chain(np.array(kept_phis), np.array(kept_logliks), rate, iterations, thin)


def kf_evaluator(model: StateSpaceModel, ys: np.ndarray) -> Evaluator:
    return lambda phi, stream: (kalman_filter_exact(model, np.exp(phi), ys).loglik, None)


def enkf_evaluator(model: StateSpaceModel, ys: np.ndarray, n: int) -> Evaluator:
    return lambda phi, stream: (enkf_run(model, np.exp(phi), n, ys, stream).loglik, None)


def pf_evaluator(model: StateSpaceModel, ys: np.ndarray, n: int) -> Evaluator:
    return lambda phi, stream: (pf_run(model, np.exp(phi), n, ys, stream).loglik, None)


def _start(model: StateSpaceModel, phi0: Optional[np.ndarray]) -> np.ndarray:
    return np.log(model.prior.mean) if phi0 is None else np.asarray(phi0, dtype=float)


def _chain(model, evaluator, iterations, cfg, stream, phi0, cov, thin, progress) -> Chain:
    cov = np.eye(model.d_theta) * 0.01 if cov is None else cov
    return run_mh_chain(
        model.prior, evaluator, _start(model, phi0), cov, cfg.scale(model.d_theta),
        iterations, stream, thin, progress,
    )


def emcmc_run(model, ys, n, iterations, cfg: MhProposalConfig, stream: RngStream,
              phi0=None, cov=None, thin=1, progress=False) -> Chain:
    """MCMC targeting the EnKF-likelihood posterior."""
    return _chain(model, enkf_evaluator(model, ys, n), iterations, cfg, stream, phi0, cov, thin, progress)


def pmmh_run(model, ys, n, iterations, cfg: MhProposalConfig, stream: RngStream,
             phi0=None, cov=None, thin=1, progress=False) -> Chain:
    """Particle marginal MH with the bootstrap filter likelihood."""
    return _chain(model, pf_evaluator(model, ys, n), iterations, cfg, stream, phi0, cov, thin, progress)


def kf_mcmc_run(model, ys, iterations, cfg: MhProposalConfig, stream: RngStream,
                phi0=None, cov=None, thin=1, progress=False) -> Chain:
    """MH with the exact Kalman likelihood."""
    return _chain(model, kf_evaluator(model, ys), iterations, cfg, stream, phi0, cov, thin, progress)


def pilot_tuned_chain(
    model: StateSpaceModel,
    evaluator: Evaluator,
    iterations: int,
    cfg: MhProposalConfig,
    stream: RngStream,
    phi0: Optional[np.ndarray] = None,
    thin: int = 1,
    pilot_fraction: float = 0.1,
    progress: bool = False,
) -> Chain:
    """Pilot chain to estimate V, then the main chain started where the pilot ended."""
    zeta2 = cfg.scale(model.d_theta)
    pilot_iters = max(2, int(iterations * pilot_fraction))
    pilot = run_mh_chain(
        model.prior, evaluator, _start(model, phi0), np.eye(model.d_theta) * 0.01, zeta2,
        pilot_iters, stream.child(0), 1, progress,
    )
    cov = proposal_covariance(pilot.phis)
    if not np.any(cov):
        logger.warning("Pilot chain never moved; keeping the initial proposal covariance")
        cov = np.eye(model.d_theta) * 0.01
    logger.info(f"Pilot acceptance {pilot.acceptance_rate:.3f}; tuned covariance diag {np.diag(cov).round(5).tolist()}")
    return run_mh_chain(model.prior, evaluator, pilot.phis[-1], cov, zeta2, iterations, stream.child(1), thin, progress)
