"""k-nearest-neighbour log-likelihood surrogate for delayed acceptance."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SurrogateStore:
    """Unique resampled log-parameters with their cumulative log-likelihoods.

    Distances are Euclidean after dividing each coordinate by the cloud's
    standard deviation.
    """

    phis: np.ndarray
    logliks: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_cloud(cls, phis: np.ndarray, logliks: np.ndarray) -> "SurrogateStore":
        phis = np.asarray(phis, dtype=float)
        logliks = np.asarray(logliks, dtype=float)
        if phis.shape[0] == 0:
            raise ValueError("Cannot build a surrogate from an empty cloud")
        unique_phis, first = np.unique(phis, axis=0, return_index=True)
        scale = phis.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(unique_phis, logliks[first], scale)

    @property
    def size(self) -> int:
        return self.phis.shape[0]

    def __call__(self, phi: np.ndarray, k: int = 3) -> float:
        return knn_surrogate_loglik(phi, self, k)


def knn_surrogate_loglik(phi: np.ndarray, store: SurrogateStore, k: int = 3) -> float:
    """Inverse-distance weighted mean over the k nearest stored points."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if store.size == 0:
        raise ValueError("Surrogate store is empty")

    dist = np.linalg.norm((store.phis - np.asarray(phi, dtype=float)) / store.scale, axis=1)
    nearest = np.argsort(dist, kind="stable")[: min(k, store.size)]
    if dist[nearest[0]] == 0.0:
        return float(store.logliks[nearest[0]])
    inv = 1.0 / dist[nearest]
    return float(np.sum(inv * store.logliks[nearest]) / np.sum(inv))
