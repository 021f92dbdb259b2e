"""RB-SMC2: SMC2 whose inner filter proposes states with an EnKF update."""
import numpy as np

from src.core.errors import UnsupportedModelError
from src.core.rng import RngStream
from src.filters.base import ParameterFilter
from src.pf.particle_filter import WeightedParticles, pf_init
from src.rbsmc2.rb_filter import ObsApprox, rb_pf_init, rb_pf_step, weighted_enkf_pf_step

WEIGHT_FUNCTIONS = ("rb", "weight0")


class RbSmc2(ParameterFilter):
    """
    Outer mechanics identical to SMC2; the inner filter is the EnKF-proposal
    particle filter.

    Args:
        inflation: Factor c applied to the approximation's R in the proposal
        weight: "rb" for the Rao-Blackwellised weight, "weight0" for the
            transition-density weight (needs a tractable transition)
        weight_uses_inflated: Weight with c*R instead of R
        resampler: Inner-filter resampler
    """

    name = "rbsmc2"

    def __init__(
        self,
        model,
        m,
        n,
        inflation: float = 1.0,
        weight: str = "rb",
        weight_uses_inflated: bool = False,
        resampler: str = "systematic",
        **kwargs,
    ):
        if weight not in WEIGHT_FUNCTIONS:
            raise ValueError(f"weight must be one of {WEIGHT_FUNCTIONS}, got {weight}")
        if weight == "weight0" and not model.has_transition_density:
            raise UnsupportedModelError(f"weight0 needs a transition density; {model.name} has none")
        super().__init__(model, m, n, **kwargs)
        self.approx = ObsApprox(model, inflation, weight_uses_inflated)
        self.weight = weight
        self.resampler = resampler

    def init_state(self, theta, n, y0, stream: RngStream):
        if self.weight == "weight0":
            return pf_init(self.model, theta, n, y0, stream)
        particles, inc, _ = rb_pf_init(self.model, theta, n, y0, self.approx, stream)
        return particles, inc

    def step_state(self, theta, state, y, t, stream: RngStream):
        if self.weight == "weight0":
            return weighted_enkf_pf_step(self.model, theta, state, y, t, self.approx, stream, self.resampler)
        particles, inc, _ = rb_pf_step(self.model, theta, state, y, t, self.approx, stream, self.resampler)
        return particles, inc

    def state_mean(self, state: WeightedParticles) -> np.ndarray:
        return state.weighted_mean()
