"""Synthetic twin-experiment data sets."""
import copy
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from src.core.model import StateSpaceModel
from src.core.rng import Phase, RngStream
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass(frozen=True)
class Recipe:
    """Default observation schedule for a model."""

    n_obs: int
    # Euler-Maruyama step for the latent path; None keeps the model's own
    fine_dt: Optional[float] = None


RECIPES: Dict[str, Recipe] = {
    "ou": Recipe(n_obs=51),
    "lv": Recipe(n_obs=20, fine_dt=1e-3),
    "sir": Recipe(n_obs=12, fine_dt=1e-2),
    "lorenz96": Recipe(n_obs=30, fine_dt=5e-3),
}


@dataclass
class SimulatedData:
    times: np.ndarray
    ys: np.ndarray
    xs: np.ndarray
    theta: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)


def simulate_dataset(
    model: StateSpaceModel,
    theta: Optional[np.ndarray] = None,
    n_obs: Optional[int] = None,
    seed: int = 0,
    fine_dt: Optional[float] = None,
) -> SimulatedData:
    """
    Simulate a latent path at a fine step and observe it at each interval.

    Args:
        model: Model to simulate from
        theta: Natural-scale parameters (model default when None)
        n_obs: Number of observations including t=0 (recipe default when None)
        seed: Run seed
        fine_dt: Latent-path step (recipe default when None)

    Returns:
        SimulatedData with observations, latent truth and generation metadata
    """
    recipe = RECIPES.get(model.name, Recipe(n_obs=10))
    theta = model.default_theta if theta is None else np.asarray(theta, dtype=float)
    n_obs = recipe.n_obs if n_obs is None else n_obs
    fine_dt = fine_dt if fine_dt is not None else recipe.fine_dt
    if n_obs < 1:
        raise ValueError(f"n_obs must be at least 1, got {n_obs}")

    path_model = model
    if fine_dt is not None and fine_dt != model.dt:
        path_model = copy.copy(model)
        path_model.dt = fine_dt

    stream = RngStream(seed)
    latent_rng = stream.generator(Phase.SIMULATE)
    obs_rng = stream.generator(Phase.OBSERVE)

    x = model.init_sample(theta, 1, latent_rng)
    xs, ys = [], []
    for t in range(n_obs):
        if t > 0:
            x = path_model.transition_sample(x, theta, latent_rng)
        xs.append(x[0].copy())
        ys.append(np.atleast_1d(model.obs_sample(x, theta, obs_rng)[0]))

    logger.info(f"Simulated {n_obs} observations from {model.name} (seed={seed}, substeps={path_model.n_substeps})")
    return SimulatedData(
        times=np.arange(n_obs) * model.obs_interval,
        ys=np.vstack(ys),
        xs=np.vstack(xs),
        theta=theta,
        seed=seed,
        meta={"fine_dt": path_model.dt, "n_substeps": path_model.n_substeps, "obs_interval": model.obs_interval},
    )
