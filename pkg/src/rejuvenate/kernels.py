"""Metropolis-Hastings and delayed-acceptance move kernels."""
from dataclasses import dataclass
from typing import Any, Callable, Optional, Tuple

import numpy as np

from src.core.distributions import GammaPrior
from src.core.errors import NumericalError
from src.core.rng import Phase, RngStream
from src.rejuvenate.proposals import rw_propose
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

# (log-parameters, stream) -> (log-likelihood estimate, refreshed filter state)
Evaluator = Callable[[np.ndarray, RngStream], Tuple[float, Any]]
Surrogate = Callable[[np.ndarray], float]


@dataclass
class MoveOutcome:
    """Result of one or more MH iterations for a single particle."""

    accepted: bool
    phi: np.ndarray
    loglik: float
    state: Any
    stage1_evals: int = 0
    stage2_evals: int = 0
    acceptances: int = 0
    proposals: int = 0


def mh_log_accept(prior_lr: float, loglik_lr: float, proposal_lr: float = 0.0) -> float:
    """log min(1, prior ratio x likelihood ratio x proposal ratio)."""
    terms = np.array([prior_lr, loglik_lr, proposal_lr], dtype=float)
    if np.any(np.isnan(terms)):
        raise ValueError(f"NaN in acceptance log-ratios: {terms}")
    if np.any(terms == -np.inf):
        return -np.inf
    return float(min(0.0, terms.sum()))


def _evaluate(evaluator: Evaluator, phi: np.ndarray, stream: RngStream) -> Tuple[float, Any]:
    try:
        loglik, state = evaluator(phi, stream)
    except NumericalError as exc:
        logger.warning(f"Likelihood evaluation failed at phi={np.round(phi, 4).tolist()}: {exc}")
        return -np.inf, None
    if np.isnan(loglik):
        logger.warning(f"Likelihood evaluation returned NaN at phi={np.round(phi, 4).tolist()}")
        return -np.inf, None
    return float(loglik), state


def mh_move(
    phi: np.ndarray,
    loglik: float,
    state: Any,
    prior: GammaPrior,
    evaluator: Evaluator,
    cov: np.ndarray,
    zeta2: float,
    stream: RngStream,
    iterations: int = 1,
) -> MoveOutcome:
    """
    Pseudo-marginal random-walk MH on log-parameters.

    Each iteration uses stream.child(iteration) keyed by phase, so the
    proposal and the uniform are shared with ``da_move`` on the same stream.
    """
    out = MoveOutcome(False, np.asarray(phi, dtype=float), float(loglik), state)
    for it in range(iterations):
        s = stream.child(it)
        phi_star = rw_propose(out.phi, cov, zeta2, s.generator(Phase.PROPOSE))
        out.proposals += 1
        out.stage1_evals += 1
        if np.array_equal(phi_star, out.phi):
            out.acceptances += 1
            continue

        prior_lr = prior.logpdf(phi_star) - prior.logpdf(out.phi)
        if prior_lr == -np.inf:
            continue

        loglik_star, state_star = _evaluate(evaluator, phi_star, s.child(Phase.EVALUATE))
        out.stage2_evals += 1
        log_a = mh_log_accept(prior_lr, loglik_star - out.loglik if np.isfinite(loglik_star) else -np.inf)
        if np.log(s.generator(Phase.ACCEPT).uniform()) < log_a:
            out.phi, out.loglik, out.state = phi_star, loglik_star, state_star
            out.acceptances += 1
            out.accepted = True
    return out


def da_move(
    phi: np.ndarray,
    loglik: float,
    state: Any,
    prior: GammaPrior,
    evaluator: Evaluator,
    surrogate: Surrogate,
    cov: np.ndarray,
    zeta2: float,
    stream: RngStream,
    iterations: int = 1,
) -> MoveOutcome:
    """
    Two-stage delayed-acceptance MH.

    Stage one screens with surrogate values for both points; the evaluator
    runs only when stage one accepts, and stage two corrects by
    (l* - l) - (s* - s).
    """
    out = MoveOutcome(False, np.asarray(phi, dtype=float), float(loglik), state)
    for it in range(iterations):
        s = stream.child(it)
        phi_star = rw_propose(out.phi, cov, zeta2, s.generator(Phase.PROPOSE))
        out.proposals += 1
        out.stage1_evals += 1
        if np.array_equal(phi_star, out.phi):
            out.acceptances += 1
            continue

        prior_lr = prior.logpdf(phi_star) - prior.logpdf(out.phi)
        if prior_lr == -np.inf:
            continue

        s_star, s_cur = surrogate(phi_star), surrogate(out.phi)
        log_a1 = mh_log_accept(prior_lr, s_star - s_cur)
        if not np.log(s.generator(Phase.ACCEPT).uniform()) < log_a1:
            continue

        loglik_star, state_star = _evaluate(evaluator, phi_star, s.child(Phase.EVALUATE))
        out.stage2_evals += 1
        if not np.isfinite(loglik_star):
            continue
        log_a2 = min(0.0, (loglik_star - out.loglik) - (s_star - s_cur))
        if np.log(s.generator(Phase.ACCEPT_STAGE2).uniform()) < log_a2:
            out.phi, out.loglik, out.state = phi_star, loglik_star, state_star
            out.acceptances += 1
            out.accepted = True
    return out


def move(
    phi: np.ndarray,
    loglik: float,
    state: Any,
    prior: GammaPrior,
    evaluator: Evaluator,
    cov: np.ndarray,
    zeta2: float,
    stream: RngStream,
    iterations: int = 1,
    surrogate: Optional[Surrogate] = None,
) -> MoveOutcome:
    """Dispatch to delayed acceptance when a surrogate is supplied."""
    if surrogate is None:
        return mh_move(phi, loglik, state, prior, evaluator, cov, zeta2, stream, iterations)
    return da_move(phi, loglik, state, prior, evaluator, surrogate, cov, zeta2, stream, iterations)
