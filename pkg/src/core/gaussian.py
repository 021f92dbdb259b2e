"""Gaussian numerics: jittered Cholesky, log-densities, moments and sampling."""
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from config.settings import JITTER_EPS, JITTER_MAX_ESCALATIONS
from src.core.errors import EnsembleSizeError, SingularCovarianceError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


def symmetrise(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def safe_cholesky(
    matrix: np.ndarray,
    eps: float = JITTER_EPS,
    max_escalations: int = JITTER_MAX_ESCALATIONS,
) -> np.ndarray:
    """
    Lower Cholesky factor with diagonal-jitter fallback.

    The first retry adds eps * trace(S) / d to the diagonal; each further
    retry multiplies the jitter by 10.

    Args:
        matrix: Square symmetric matrix
        eps: Relative jitter
        max_escalations: Number of x10 escalations after the first retry

    Returns:
        Lower-triangular factor L with L @ L.T ~= matrix
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise SingularCovarianceError("Covariance contains non-finite entries")

    try:
        return linalg.cholesky(matrix, lower=True)
    except linalg.LinAlgError:
        pass

    d = matrix.shape[0]
    jitter = eps * np.trace(matrix) / d
    if jitter <= 0:
        raise SingularCovarianceError(f"Cholesky failed and trace is non-positive ({np.trace(matrix):.3e})")

    for attempt in range(max_escalations + 1):
        try:
            factor = linalg.cholesky(matrix + jitter * np.eye(d), lower=True)
            logger.warning(f"Cholesky needed jitter {jitter:.3e} (attempt {attempt + 1})")
            return factor
        except linalg.LinAlgError:
            jitter *= 10.0

    raise SingularCovarianceError(
        f"Cholesky failed after {max_escalations} jitter escalations (d={d})"
    )


def gaussian_logpdf(y: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """
    log N(y; mu, sigma) via a Cholesky factor.

    ``y`` and ``mu`` broadcast against each other along leading axes, so a
    batch of points can share one covariance. Returns a float for 1-D input.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    d = sigma.shape[0]
    if y.shape[-1] != d or mu.shape[-1] != d:
        raise ValueError(f"Dimension mismatch: y {y.shape}, mu {mu.shape}, Sigma {sigma.shape}")

    chol = safe_cholesky(sigma)
    diff = np.atleast_2d(y - mu)
    z = linalg.solve_triangular(chol, diff.T, lower=True)
    quad = np.sum(z ** 2, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    out = -0.5 * (d * LOG_2PI + log_det + quad)

    if y.ndim == 1 and mu.ndim == 1:
        return float(out[0])
    return out


def ensemble_moments(ensemble: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sample mean and (N-1)-divisor covariance of an (N, d) ensemble."""
    ensemble = np.asarray(ensemble, dtype=float)
    if ensemble.ndim == 1:
        ensemble = ensemble[:, None]
    n = ensemble.shape[0]
    if n < 2:
        raise EnsembleSizeError(f"Sample covariance needs at least 2 members, got {n}")

    mean = ensemble.mean(axis=0)
    centred = ensemble - mean
    cov = centred.T @ centred / (n - 1)
    return mean, symmetrise(cov)


def weighted_moments(values: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Weighted mean and covariance for normalised weights (biased form)."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    weights = np.asarray(weights, dtype=float)
    mean = weights @ values
    centred = values - mean
    cov = (centred * weights[:, None]).T @ centred
    return mean, symmetrise(cov)


def cho_gain(cross_cov: np.ndarray, innovation_cov: np.ndarray) -> np.ndarray:
    """Return cross_cov @ inv(innovation_cov) through a Cholesky solve."""
    chol = safe_cholesky(innovation_cov)
    return linalg.cho_solve((chol, True), np.asarray(cross_cov, dtype=float).T).T


def mvn_sample(
    mu: np.ndarray,
    sigma: np.ndarray,
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> np.ndarray:
    """
    Draw from N(mu, sigma).

    A zero covariance returns mu exactly. With ``size`` the result has shape
    (size, d); ``mu`` may also be an (size, d) array of per-draw means.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = sigma.shape[0]
    if mu.shape[-1] != d:
        raise ValueError(f"Dimension mismatch: mu {mu.shape}, Sigma {sigma.shape}")

    shape = (d,) if size is None else (size, d)
    if not np.any(sigma):
        return np.broadcast_to(mu, shape).copy()

    chol = safe_cholesky(sigma)
    z = rng.standard_normal(shape)
    return mu + z @ chol.T
