"""Gamma densities and the independent-Gamma parameter prior on the log scale."""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats


def _check_positive(**kwargs) -> None:
    for name, value in kwargs.items():
        if np.any(np.asarray(value) <= 0):
            raise ValueError(f"{name} must be positive, got {value}")


def gamma_logpdf(x, shape, rate):
    """Log density of Gamma(shape, rate) (rate = 1 / scale)."""
    _check_positive(x=x, shape=shape, rate=rate)
    return stats.gamma.logpdf(x, a=shape, scale=1.0 / np.asarray(rate, dtype=float))


def gamma_sample(shape, rate, rng: np.random.Generator, size=None):
    _check_positive(shape=shape, rate=rate)
    return rng.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


@dataclass(frozen=True)
class GammaPrior:
    """Independent Gamma(shape_i, rate_i) prior over positive parameters.

    Parameters are carried as phi = log(theta); ``logpdf`` is the density of
    phi, i.e. it includes the log-Jacobian sum(phi).
    """

    shapes: Sequence[float]
    rates: Sequence[float]

    def __post_init__(self):
        if len(self.shapes) != len(self.rates):
            raise ValueError("shapes and rates must have equal length")
        _check_positive(shapes=self.shapes, rates=self.rates)

    @property
    def dim(self) -> int:
        return len(self.shapes)

    @property
    def mean(self) -> np.ndarray:
        return np.asarray(self.shapes, dtype=float) / np.asarray(self.rates, dtype=float)

    def sample(self, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
        """Draw log-parameters, shape (d,) or (n, d)."""
        size = (self.dim,) if n is None else (n, self.dim)
        theta = gamma_sample(np.asarray(self.shapes), np.asarray(self.rates), rng, size=size)
        return np.log(theta)

    def logpdf(self, phi: np.ndarray):
        """Prior log density of log-parameters; -inf where non-finite."""
        phi = np.asarray(phi, dtype=float)
        with np.errstate(over="ignore"):
            theta = np.exp(phi)
        out = stats.gamma.logpdf(theta, a=np.asarray(self.shapes), scale=1.0 / np.asarray(self.rates))
        total = np.sum(out + phi, axis=-1)
        total = np.where(np.all(np.isfinite(phi), axis=-1), total, -np.inf)
        return float(total) if np.ndim(total) == 0 else total
