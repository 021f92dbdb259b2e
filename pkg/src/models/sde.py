"""Euler-Maruyama simulation for diffusion models."""
from abc import abstractmethod
from typing import Callable, Optional, Sequence

import numpy as np

from src.core.errors import TransitionFailureError
from src.core.model import StateSpaceModel

# State floor applied after each substep to positive compartments
STATE_FLOOR = 1e-6

DriftFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
DiffusionFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _batched_sqrt(b: np.ndarray) -> np.ndarray:
    """Square roots L with L @ L.T = b for a stack of PSD matrices."""
    try:
        return np.linalg.cholesky(b)
    except np.linalg.LinAlgError:
        # Singular blocks (e.g. zero noise) take the symmetric eigen root
        w, v = np.linalg.eigh(0.5 * (b + np.swapaxes(b, -1, -2)))
        return v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]


def euler_maruyama_step(
    drift: DriftFn,
    diffusion: DiffusionFn,
    x: np.ndarray,
    theta: np.ndarray,
    dt: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    One Euler-Maruyama step x' ~ N(x + a(x) dt, b(x) dt).

    ``diffusion`` returns either (n, d, d) matrices or (n, d) diagonal
    variances.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a = drift(x, theta)
    b = diffusion(x, theta)
    z = rng.standard_normal(x.shape)

    if b.ndim == 2:
        noise = np.sqrt(np.clip(b, 0.0, None)) * z
    else:
        noise = np.einsum("nij,nj->ni", _batched_sqrt(b), z)

    out = x + a * dt + np.sqrt(dt) * noise
    bad = ~np.all(np.isfinite(out), axis=1)
    if np.any(bad):
        raise TransitionFailureError(member_index=int(np.flatnonzero(bad)[0]))
    return out


def substep_transition(
    drift: DriftFn,
    diffusion: DiffusionFn,
    x: np.ndarray,
    theta: np.ndarray,
    m: int,
    dt: float,
    rng: np.random.Generator,
    floor_idx: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Chain m Euler-Maruyama steps, flooring ``floor_idx`` components after each."""
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    for _ in range(m):
        x = euler_maruyama_step(drift, diffusion, x, theta, dt, rng)
        if floor_idx:
            x[:, floor_idx] = np.maximum(x[:, floor_idx], STATE_FLOOR)
    return x


class SdeModel(StateSpaceModel):
    """Model whose transition is m Euler-Maruyama substeps of length dt."""

    # Components floored at STATE_FLOOR after each substep
    floor_idx: Sequence[int] = ()

    @abstractmethod
    def drift(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """a(x, theta), shape (n, d_x)."""

    @abstractmethod
    def diffusion(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """b(x, theta), shape (n, d_x, d_x) or (n, d_x) when diagonal."""

    def transition_sample(self, x: np.ndarray, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return substep_transition(
            self.drift, self.diffusion, x, theta, self.n_substeps, self.dt, rng, list(self.floor_idx)
        )
