"""Liu-West kernel shrinkage for artificial parameter dynamics."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.core.errors import EnsembleSizeError
from src.core.gaussian import mvn_sample, weighted_moments


@dataclass(frozen=True)
class LiuWestConfig:
    """Discount factor delta in (1/3, 1]; h and a follow from it."""

    delta: float = 0.97

    def __post_init__(self):
        if not (1.0 / 3.0 < self.delta <= 1.0):
            raise ValueError(f"delta must lie in (1/3, 1], got {self.delta}")

    @property
    def h(self) -> float:
        return 1.0 - ((3.0 * self.delta - 1.0) / (2.0 * self.delta)) ** 2

    @property
    def a(self) -> float:
        return float(np.sqrt(1.0 - self.h ** 2))


def liu_west_shrink(
    phis: np.ndarray,
    cfg: LiuWestConfig,
    rng: np.random.Generator,
    weights: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Sample phi_i ~ N(a phi_i + (1 - a) phi_bar, h^2 V) for every particle.

    Args:
        phis: Log-parameters, shape (M, d)
        cfg: Shrinkage configuration
        rng: Generator for the jitter
        weights: Normalised weights for phi_bar and V (uniform when None)

    Returns:
        Shrunk and jittered log-parameters, shape (M, d)
    """
    phis = np.asarray(phis, dtype=float)
    m = phis.shape[0]
    if m < 2:
        raise EnsembleSizeError(f"Liu-West needs at least 2 particles, got {m}")
    if cfg.h == 0.0:
        return phis.copy()

    weights = np.full(m, 1.0 / m) if weights is None else np.asarray(weights, dtype=float)
    mean, cov = weighted_moments(phis, weights)
    centres = cfg.a * phis + (1.0 - cfg.a) * mean
    return mvn_sample(centres, cfg.h ** 2 * cov, rng, size=m)
