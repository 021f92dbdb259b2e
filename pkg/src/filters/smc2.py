"""SMC2: parameter particles weighted by bootstrap particle-filter increments."""
import numpy as np

from src.core.rng import RngStream
from src.filters.base import ParameterFilter
from src.pf.particle_filter import BootstrapProposal, WeightedParticles, pf_init, pf_step


class Smc2(ParameterFilter):
    """Pseudo-marginal resample-move over parameters; set growth="doubling" for the acceptance-rate rule."""

    name = "smc2"

    def __init__(self, model, m, n, resampler: str = "multinomial", **kwargs):
        super().__init__(model, m, n, **kwargs)
        self.resampler = resampler
        self.proposal = BootstrapProposal(model)

    def init_state(self, theta, n, y0, stream: RngStream):
        return pf_init(self.model, theta, n, y0, stream)

    def step_state(self, theta, state, y, t, stream: RngStream):
        return pf_step(self.model, theta, state, y, t, stream, self.proposal, self.resampler)

    def state_mean(self, state: WeightedParticles) -> np.ndarray:
        return state.weighted_mean()
