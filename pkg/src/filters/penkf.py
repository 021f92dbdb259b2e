"""Particle EnKF: Liu-West parameter dynamics with EnKF-likelihood weights, no mutation."""
from typing import Optional

from src.core.rng import Phase
from src.enkf.liu_west import LiuWestConfig, liu_west_shrink
from src.filters.nenkf import NestedEnKF
from src.filters.system import ParamParticleSystem


class Penkf(NestedEnKF):
    name = "penkf"
    supports_moves = False
    supports_growth = False

    def __init__(self, model, m, n, liu_west: Optional[LiuWestConfig] = None, **kwargs):
        super().__init__(model, m, n, **kwargs)
        self.liu_west = liu_west or LiuWestConfig()

    def propagate_params(self, system: ParamParticleSystem, t: int) -> ParamParticleSystem:
        if system.m < 2:
            return system
        shrunk = liu_west_shrink(
            system.log_params,
            self.liu_west,
            self.stream.generator(t, Phase.LIU_WEST),
            weights=system.normalised_weights(t - 1),
        )
        return ParamParticleSystem(
            log_params=shrunk,
            log_weights=system.log_weights,
            logliks=system.logliks,
            states=system.states,
            increments=system.increments,
            n_members=system.n_members,
            origins=system.origins,
        )
