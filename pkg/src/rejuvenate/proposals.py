"""Random-walk proposals on the log-parameter scale."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.core.gaussian import ensemble_moments, mvn_sample


def default_zeta2(d_theta: int) -> float:
    """Pseudo-marginal scaling rule 2.56^2 / d_theta."""
    return 2.56 ** 2 / d_theta


@dataclass(frozen=True)
class MhProposalConfig:
    """Random-walk settings; the proposal covariance is zeta2 * V."""

    zeta2: Optional[float] = None
    leave_one_out: bool = True
    iterations: int = 1

    def __post_init__(self):
        if self.zeta2 is not None and self.zeta2 < 0:
            raise ValueError(f"zeta2 must be non-negative, got {self.zeta2}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be at least 1, got {self.iterations}")

    def scale(self, d_theta: int) -> float:
        return default_zeta2(d_theta) if self.zeta2 is None else self.zeta2


def proposal_covariance(phis: np.ndarray, exclude: Optional[int] = None) -> np.ndarray:
    """Sample covariance of the cloud, optionally leaving out row ``exclude``."""
    phis = np.asarray(phis, dtype=float)
    if exclude is not None and phis.shape[0] > 2:
        phis = np.delete(phis, exclude, axis=0)
    if phis.shape[0] < 2:
        return np.zeros((phis.shape[1], phis.shape[1]))
    return ensemble_moments(phis)[1]


def proposal_covariances(phis: np.ndarray, leave_one_out: bool = True) -> np.ndarray:
    """Per-particle covariances, shape (M, d, d)."""
    phis = np.asarray(phis, dtype=float)
    m, d = phis.shape
    if not leave_one_out or m <= 2:
        return np.broadcast_to(proposal_covariance(phis), (m, d, d))

    # Leave-one-out moments from running sums
    total = phis.sum(axis=0)
    outer_total = phis.T @ phis
    loo_means = (total - phis) / (m - 1)
    outer = outer_total - np.einsum("ni,nj->nij", phis, phis)
    covs = (outer - (m - 1) * np.einsum("ni,nj->nij", loo_means, loo_means)) / (m - 2)
    return 0.5 * (covs + np.swapaxes(covs, 1, 2))


def rw_propose(phi: np.ndarray, cov: np.ndarray, zeta2: float, rng: np.random.Generator) -> np.ndarray:
    """phi* = phi + eps, eps ~ N(0, zeta2 * cov)."""
    phi = np.asarray(phi, dtype=float)
    return mvn_sample(phi, zeta2 * np.asarray(cov, dtype=float), rng)
