"""Parameter-particle system, trigger/move configuration and run diagnostics."""
from dataclasses import asdict, dataclass, field
from typing import Any, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.core.rng import RngStream
from src.pf.resampling import log_normalise
from src.rejuvenate.proposals import MhProposalConfig

GROWTH_RULES = ("variance", "doubling", "none")

# Stream and log-parameters that drove one step of an inner filter
Origin = Tuple[RngStream, np.ndarray]


@dataclass
class ParamParticleSystem:
    """
    M weighted parameter particles, each with its own inner filter state.

    log_params: (M, d_theta) log-parameters
    log_weights: (M,) unnormalised log-weights
    logliks: (M,) cumulative log-likelihood estimates
    states: per-particle inner filter state (ensemble, particle cloud, ...)
    increments: per-particle list of the increments summed into ``logliks``
    n_members: current inner ensemble / particle count
    origins: per-particle list, one entry per step, of the stream and
        log-parameters that produced that step; replaying them through the
        inner filter gives back ``logliks``. Empty when not tracked.
    """

    log_params: np.ndarray
    log_weights: np.ndarray
    logliks: np.ndarray
    states: List[Any]
    increments: List[List[float]]
    n_members: int
    origins: List[List[Origin]] = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.log_params.shape[0]

    def normalised_weights(self, time_index: int = -1) -> np.ndarray:
        weights, _ = log_normalise(self.log_weights, time_index)
        return weights

    def weighted_mean(self) -> np.ndarray:
        return self.normalised_weights() @ self.log_params

    def unique_count(self) -> int:
        return int(np.unique(self.log_params, axis=0).shape[0])

    def take(self, idx: np.ndarray) -> "ParamParticleSystem":
        """Copy of the system restricted to rows ``idx`` with uniform weights."""
        return ParamParticleSystem(
            log_params=self.log_params[idx].copy(),
            log_weights=np.zeros(len(idx)),
            logliks=self.logliks[idx].copy(),
            states=[self.states[j] for j in idx],
            increments=[list(self.increments[j]) for j in idx],
            n_members=self.n_members,
            origins=[list(self.origins[j]) for j in idx] if self.origins else [],
        )


@dataclass(frozen=True)
class TriggerConfig:
    """
    Resample-move and ensemble-size triggers.

    ess_fraction: resample-move when ESS < ess_fraction * M
    sigma2_threshold: grow N when the log-likelihood variance exceeds it
    variance_runs: runs used to estimate that variance
    growth: "variance", "doubling" or "none"
    n_max: cap on N
    acceptance_threshold: doubling rule fires below this acceptance rate
    """

    ess_fraction: float = 0.4
    sigma2_threshold: float = 1.5
    variance_runs: int = 10
    growth: str = "variance"
    n_max: int = 100_000
    acceptance_threshold: float = 0.10

    def __post_init__(self):
        if not 0.0 <= self.ess_fraction < 1.0:
            raise ValueError(f"ess_fraction must lie in [0, 1), got {self.ess_fraction}")
        if self.sigma2_threshold <= 0:
            raise ValueError("sigma2_threshold must be positive")
        if self.variance_runs < 2:
            raise ValueError(f"variance_runs must be at least 2, got {self.variance_runs}")
        if self.growth not in GROWTH_RULES:
            raise ValueError(f"growth must be one of {GROWTH_RULES}, got {self.growth}")
        if self.n_max < 2:
            raise ValueError("n_max must be at least 2")


@dataclass(frozen=True)
class MoveConfig:
    proposal: MhProposalConfig = field(default_factory=MhProposalConfig)
    delayed_acceptance: bool = True
    k: int = 3

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")


@dataclass
class StepRecord:
    t: int
    ess: float
    resampled: bool = False
    moved: bool = False
    acceptance_rate: float = float("nan")
    stage1_evals: int = 0
    stage2_evals: int = 0
    n_members: int = 0
    sigma2_n: float = float("nan")
    unique_before: int = 0
    unique_after: int = 0
    n_collapsed: int = 0
    wall_ms: float = 0.0
    cpu_ms: float = 0.0


class RunRecord:
    """Per-time-step diagnostics of a parameter-filter run."""

    TIMING_COLUMNS = ("wall_ms", "cpu_ms")

    def __init__(self):
        self.rows: List[StepRecord] = []

    def append(self, row: StepRecord) -> None:
        if self.rows and row.t <= self.rows[-1].t:
            raise ValueError(f"Non-increasing time index {row.t}")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, i: int) -> StepRecord:
        return self.rows[i]

    def to_frame(self, include_timing: bool = False) -> pd.DataFrame:
        frame = pd.DataFrame([asdict(r) for r in self.rows], columns=list(StepRecord.__dataclass_fields__))
        if not include_timing:
            frame = frame.drop(columns=list(self.TIMING_COLUMNS))
        return frame

    def total_wall_ms(self) -> float:
        return float(sum(r.wall_ms for r in self.rows))

    def total_cpu_ms(self) -> float:
        return float(sum(r.cpu_ms for r in self.rows))


def weighted_quantile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """Inverse weighted CDF: smallest value whose cumulative weight reaches q."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    cdf = np.cumsum(weights[order])
    idx = np.searchsorted(cdf, q * cdf[-1], side="left")
    return float(values[order][min(idx, values.size - 1)])


@dataclass
class PosteriorSummary:
    """Weighted mean and 95% interval of each log-parameter at one time."""

    t: int
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sd: Optional[np.ndarray] = None

    @classmethod
    def from_cloud(cls, t: int, phis: np.ndarray, weights: np.ndarray) -> "PosteriorSummary":
        mean = weights @ phis
        sd = np.sqrt(np.maximum(weights @ (phis - mean) ** 2, 0.0))
        lower = np.array([weighted_quantile(phis[:, j], weights, 0.025) for j in range(phis.shape[1])])
        upper = np.array([weighted_quantile(phis[:, j], weights, 0.975) for j in range(phis.shape[1])])
        return cls(t, mean, lower, upper, sd)
