"""Ensemble-size adaptation by weight-one exchange of inner filters."""
import math
from typing import Any, Callable, List, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.core.errors import NumericalError
from src.core.rng import RngStream
from src.filters.system import ParamParticleSystem, TriggerConfig
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

# (particle index, log-parameters, new size) -> (loglik, inner state, increments)
Rerun = Callable[[int, np.ndarray, int], Tuple[float, Any, List[float]]]


def estimate_sigma2_n(
    phi_bar: np.ndarray,
    evaluator: Callable[[np.ndarray, RngStream], float],
    r: int,
    stream: RngStream,
    n_jobs: int = 1,
) -> float:
    """
    Sample variance of r log-likelihood estimates at a fixed parameter.

    Failed or non-finite runs are dropped; fewer than two survivors is an error.
    """
    if r < 2:
        raise ValueError(f"r must be at least 2, got {r}")

    def one(k: int) -> float:
        try:
            return float(evaluator(phi_bar, stream.child(k)))
        except NumericalError as exc:
            logger.warning(f"Variance run {k} failed: {exc}")
            return float("nan")

    values = np.array(Parallel(n_jobs=n_jobs, backend="threading")(delayed(one)(k) for k in range(r)))
    kept = values[np.isfinite(values)]
    if kept.size < r:
        logger.warning(f"Dropped {r - kept.size} of {r} variance runs")
    if kept.size < 2:
        raise NumericalError(f"Only {kept.size} usable runs for the log-likelihood variance")
    return float(np.var(kept, ddof=1))


def exchange(system: ParamParticleSystem, n_new: int, rerun: Rerun, n_jobs: int = 1) -> ParamParticleSystem:
    """Replace every inner filter by a fresh size-n_new run; weights are untouched."""
    results = Parallel(n_jobs=n_jobs, backend="threading")(
        delayed(rerun)(i, system.log_params[i], n_new) for i in range(system.m)
    )
    return ParamParticleSystem(
        log_params=system.log_params,
        log_weights=system.log_weights,
        logliks=np.array([r[0] for r in results], dtype=float),
        states=[r[1] for r in results],
        increments=[list(r[2]) for r in results],
        n_members=n_new,
    )


def grow_n(current: int, factor: float, trigger: TriggerConfig) -> int:
    n_new = int(math.ceil(factor * current))
    if n_new > trigger.n_max:
        logger.warning(f"Requested N={n_new} exceeds n_max; capping at {trigger.n_max}")
        n_new = trigger.n_max
    return n_new


def adapt_n(
    system: ParamParticleSystem,
    sigma2: float,
    trigger: TriggerConfig,
    rerun: Rerun,
    n_jobs: int = 1,
) -> ParamParticleSystem:
    """If sigma2 exceeds the threshold, exchange to N = ceil(sigma2 * N)."""
    if not sigma2 > trigger.sigma2_threshold:
        return system
    n_new = grow_n(system.n_members, sigma2, trigger)
    if n_new <= system.n_members:
        return system
    logger.info(f"Growing N from {system.n_members} to {n_new} (sigma2={sigma2:.3f})")
    return exchange(system, n_new, rerun, n_jobs)
