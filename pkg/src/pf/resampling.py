"""Weight normalisation, effective sample size and resampling schemes."""
from typing import Callable, Dict, Tuple

import numpy as np
from scipy.special import logsumexp

from src.core.errors import ParticleCollapseError

WEIGHT_TOL = 1e-8


def log_normalise(log_weights: np.ndarray, time_index: int = -1) -> Tuple[np.ndarray, float]:
    """
    Normalise log-weights with log-sum-exp.

    Returns:
        (normalised weights, log of the unnormalised total)
    """
    log_weights = np.asarray(log_weights, dtype=float)
    if np.any(np.isnan(log_weights)):
        raise ValueError("NaN log-weight")
    total = logsumexp(log_weights)
    if not np.isfinite(total):
        raise ParticleCollapseError(time_index, message="all log-weights are -inf")
    return np.exp(log_weights - total), float(total)


def _check_normalised(weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise ValueError("Weights must be a non-empty vector")
    if np.any(weights < 0):
        raise ValueError("Weights must be non-negative")
    total = weights.sum()
    if total == 0:
        raise ValueError("All weights are zero")
    if abs(total - 1.0) > WEIGHT_TOL:
        raise ValueError(f"Weights must sum to 1, got {total:.12g}")
    return weights


def ess(weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w^2) of normalised weights."""
    weights = _check_normalised(weights)
    return float(1.0 / np.sum(weights ** 2))


def ess_from_log(log_weights: np.ndarray) -> float:
    weights, _ = log_normalise(log_weights)
    return ess(weights)


def resample_multinomial(weights: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` independent indices with probabilities ``weights``."""
    weights = _check_normalised(weights)
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    return rng.choice(weights.size, size=count, p=weights / weights.sum())


def resample_systematic(weights: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling with a single uniform offset."""
    weights = _check_normalised(weights)
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    positions = (rng.uniform() + np.arange(count)) / count
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, positions, side="right")
    return np.minimum(idx, weights.size - 1)


RESAMPLERS: Dict[str, Callable[[np.ndarray, int, np.random.Generator], np.ndarray]] = {
    "multinomial": resample_multinomial,
    "systematic": resample_systematic,
}


def get_resampler(name: str) -> Callable[[np.ndarray, int, np.random.Generator], np.ndarray]:
    if name not in RESAMPLERS:
        raise ValueError(f"Unknown resampler '{name}'. Available: {sorted(RESAMPLERS)}")
    return RESAMPLERS[name]
