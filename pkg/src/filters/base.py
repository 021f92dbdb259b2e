"""Shared outer loop for parameter-particle filters: weight, test ESS, resample-move."""
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Any, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from config.settings import N_JOBS
from src.core.errors import NumericalError, ParticleCollapseError
from src.core.model import StateSpaceModel
from src.core.rng import Phase, RngStream
from src.filters.dynamic_n import adapt_n, estimate_sigma2_n, exchange, grow_n
from src.filters.system import (
    MoveConfig,
    ParamParticleSystem,
    PosteriorSummary,
    RunRecord,
    StepRecord,
    TriggerConfig,
)
from src.pf.resampling import ess, resample_multinomial
from src.rejuvenate.kernels import move
from src.rejuvenate.proposals import proposal_covariances
from src.rejuvenate.surrogate import SurrogateStore, knn_surrogate_loglik
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass
class FilterResult:
    system: ParamParticleSystem
    record: RunRecord
    summaries: List[PosteriorSummary] = field(default_factory=list)
    state_means: List[np.ndarray] = field(default_factory=list)

    @property
    def final(self) -> PosteriorSummary:
        return self.summaries[-1]


class ParameterFilter(ABC):
    """
    Sequential filter over M parameter particles, each carrying an inner
    state filter of size N.

    Subclasses provide the inner filter through ``init_state`` and
    ``step_state``; this class handles weighting, the once-per-step ESS test,
    multinomial resampling, the MH / delayed-acceptance move sweep and
    ensemble-size growth.
    """

    name = "filter"
    supports_moves = True
    supports_growth = True

    def __init__(
        self,
        model: StateSpaceModel,
        m: int,
        n: int,
        trigger: Optional[TriggerConfig] = None,
        move_cfg: Optional[MoveConfig] = None,
        seed: int = 0,
        n_jobs: Optional[int] = None,
        common_random_numbers: bool = False,
    ):
        if m < 1:
            raise ValueError(f"M must be at least 1, got {m}")
        if n < 1:
            raise ValueError(f"N must be at least 1, got {n}")
        self.model = model
        self.m = m
        self.n = n
        self.trigger = trigger or TriggerConfig()
        self.move_cfg = move_cfg or MoveConfig()
        self.seed = seed
        self.stream = RngStream(seed)
        self.n_jobs = N_JOBS if n_jobs is None else n_jobs
        self.common_random_numbers = common_random_numbers

    # --- inner filter ---------------------------------------------------

    @abstractmethod
    def init_state(self, theta: np.ndarray, n: int, y0: np.ndarray, stream: RngStream) -> Tuple[Any, float]:
        """Start the inner filter at t=0; returns (state, increment)."""

    @abstractmethod
    def step_state(self, theta: np.ndarray, state: Any, y: np.ndarray, t: int, stream: RngStream) -> Tuple[Any, float]:
        """Advance the inner filter to t; returns (state, increment)."""

    @abstractmethod
    def state_mean(self, state: Any) -> np.ndarray:
        """Filtering mean of the latent state held by ``state``."""

    def rerun(self, theta: np.ndarray, n: int, ys: np.ndarray, stream: RngStream) -> Tuple[float, Any, List[float]]:
        """Run the inner filter over all of ``ys`` from scratch."""
        state, inc = self.init_state(theta, n, ys[0], stream)
        increments = [inc]
        for t in range(1, ys.shape[0]):
            state, inc = self.step_state(theta, state, ys[t], t, stream)
            increments.append(inc)
        return float(np.sum(increments)), state, increments

    def propagate_params(self, system: ParamParticleSystem, t: int) -> ParamParticleSystem:
        """Artificial parameter dynamics before weighting; none by default."""
        return system

    # --- streams --------------------------------------------------------

    def _slot(self, i: int) -> int:
        return 0 if self.common_random_numbers else i

    def slot_stream(self, i: int) -> RngStream:
        return self.stream.child(Phase.WEIGHT, self._slot(i))

    def move_stream(self, t: int, i: int) -> RngStream:
        return self.stream.child(Phase.MOVE, t, self._slot(i))

    def exchange_stream(self, t: int, i: int) -> RngStream:
        return self.stream.child(Phase.EXCHANGE, t, self._slot(i))

    def _parallel(self, fn, count: int) -> list:
        return Parallel(n_jobs=self.n_jobs, backend="threading")(delayed(fn)(i) for i in range(count))

    # --- outer loop -----------------------------------------------------

    def initialise(self, ys: np.ndarray, row: StepRecord) -> ParamParticleSystem:
        phis = self.model.prior.sample(self.stream.generator(Phase.PRIOR), self.m)

        def one(i):
            try:
                return self.init_state(np.exp(phis[i]), self.n, ys[0], self.slot_stream(i))
            except NumericalError as exc:
                logger.warning(f"Particle {i} failed at t=0: {exc}")
                return None, -np.inf

        results = self._parallel(one, self.m)
        incs = np.array([r[1] for r in results], dtype=float)
        system = ParamParticleSystem(
            log_params=phis,
            log_weights=incs.copy(),
            logliks=incs.copy(),
            states=[r[0] for r in results],
            increments=[[inc] for inc in incs],
            n_members=self.n,
            origins=[[(self.slot_stream(i), phis[i])] for i in range(self.m)],
        )
        return self._after_weighting(system, ys, 0, row)

    def step(self, system: ParamParticleSystem, ys: np.ndarray, t: int, row: StepRecord) -> ParamParticleSystem:
        """Weight every particle with its inner-filter increment, then test ESS."""
        system = self.propagate_params(system, t)

        def one(i):
            if system.states[i] is None or not np.isfinite(system.logliks[i]):
                return None, -np.inf
            try:
                return self.step_state(np.exp(system.log_params[i]), system.states[i], ys[t], t, self.slot_stream(i))
            except NumericalError as exc:
                logger.warning(f"Particle {i} failed at t={t}: {exc}")
                return None, -np.inf

        results = self._parallel(one, system.m)
        incs = np.array([r[1] for r in results], dtype=float)
        system = ParamParticleSystem(
            log_params=system.log_params,
            log_weights=system.log_weights + incs,
            logliks=system.logliks + incs,
            states=[r[0] for r in results],
            increments=[prev + [inc] for prev, inc in zip(system.increments, incs)],
            n_members=system.n_members,
            origins=[
                prev + [(self.slot_stream(i), system.log_params[i])] for i, prev in enumerate(system.origins)
            ],
        )
        return self._after_weighting(system, ys, t, row)

    def _after_weighting(self, system, ys, t, row: StepRecord) -> ParamParticleSystem:
        collapsed = ~np.isfinite(system.log_weights)
        row.n_collapsed = int(collapsed.sum())
        if row.n_collapsed == system.m:
            raise ParticleCollapseError(t, message="every parameter particle has zero weight")
        if row.n_collapsed:
            logger.warning(f"{row.n_collapsed} parameter particles collapsed at t={t}")

        row.ess = ess(system.normalised_weights(t))
        if row.ess < self.trigger.ess_fraction * system.m:
            system = self.resample_move(system, ys[: t + 1], t, row)
        row.n_members = system.n_members
        return system

    def resample_move(self, system: ParamParticleSystem, ys: np.ndarray, t: int, row: StepRecord) -> ParamParticleSystem:
        idx = resample_multinomial(system.normalised_weights(t), system.m, self.stream.generator(t, Phase.RESAMPLE))
        system = system.take(idx)
        row.resampled = True
        if not self.supports_moves:
            return system

        row.unique_before = system.unique_count()
        cfg = self.move_cfg.proposal
        covs = proposal_covariances(system.log_params, cfg.leave_one_out)
        zeta2 = cfg.scale(self.model.d_theta)
        n = system.n_members

        surrogate = None
        if self.move_cfg.delayed_acceptance:
            store = SurrogateStore.from_cloud(system.log_params, system.logliks)
            k = self.move_cfg.k
            surrogate = lambda phi: knn_surrogate_loglik(phi, store, k)

        def evaluator(phi, s):
            loglik, state, incs = self.rerun(np.exp(phi), n, ys, s)
            return loglik, (state, incs, [(s, phi)] * ys.shape[0])

        def one(i):
            return move(
                system.log_params[i], system.logliks[i],
                (system.states[i], system.increments[i], system.origins[i]),
                self.model.prior, evaluator, covs[i], zeta2, self.move_stream(t, i),
                cfg.iterations, surrogate,
            )

        outcomes = self._parallel(one, system.m)
        system = ParamParticleSystem(
            log_params=np.array([o.phi for o in outcomes]),
            log_weights=system.log_weights,
            logliks=np.array([o.loglik for o in outcomes], dtype=float),
            states=[o.state[0] for o in outcomes],
            increments=[list(o.state[1]) for o in outcomes],
            n_members=n,
            origins=[list(o.state[2]) for o in outcomes],
        )

        proposals = sum(o.proposals for o in outcomes)
        row.moved = True
        row.acceptance_rate = sum(o.acceptances for o in outcomes) / proposals
        row.stage1_evals = sum(o.stage1_evals for o in outcomes)
        row.stage2_evals = sum(o.stage2_evals for o in outcomes)
        row.unique_after = system.unique_count()
        logger.debug(
            f"t={t}: moved, acceptance {row.acceptance_rate:.3f}, "
            f"unique {row.unique_before}->{row.unique_after}, evaluator calls {row.stage2_evals}"
        )
        return self.adapt_after_move(system, ys, t, row)

    def _exchange_rerun(self, ys: np.ndarray, t: int):
        def rerun(i, phi, n_new):
            try:
                return self.rerun(np.exp(phi), n_new, ys, self.exchange_stream(t, i))
            except NumericalError as exc:
                logger.warning(f"Exchange rerun failed for particle {i} at t={t}: {exc}")
                return -np.inf, None, [-np.inf]
        return rerun

    def adapt_after_move(self, system: ParamParticleSystem, ys: np.ndarray, t: int, row: StepRecord) -> ParamParticleSystem:
        """Grow N after a move sweep according to the configured rule."""
        growth = self.trigger.growth
        if not self.supports_growth or growth == "none":
            return system

        if growth == "variance":
            n = system.n_members
            row.sigma2_n = estimate_sigma2_n(
                system.weighted_mean(),
                lambda phi, s: self.rerun(np.exp(phi), n, ys, s)[0],
                self.trigger.variance_runs,
                self.stream.child(Phase.VARIANCE, t),
                self.n_jobs,
            )
            grown = adapt_n(system, row.sigma2_n, self.trigger, self._exchange_rerun(ys, t), self.n_jobs)
            return system if grown is system else self._exchanged_origins(grown, ys, t)

        if row.acceptance_rate < self.trigger.acceptance_threshold:
            n_new = grow_n(system.n_members, 2.0, self.trigger)
            if n_new != system.n_members:
                logger.info(f"Acceptance {row.acceptance_rate:.3f} below threshold; doubling N to {n_new}")
                grown = exchange(system, n_new, self._exchange_rerun(ys, t), self.n_jobs)
                return self._exchanged_origins(grown, ys, t)
        return system

    def _exchanged_origins(self, system: ParamParticleSystem, ys: np.ndarray, t: int) -> ParamParticleSystem:
        origins = [[(self.exchange_stream(t, i), system.log_params[i])] * ys.shape[0] for i in range(system.m)]
        return replace(system, origins=origins)

    def replay(self, system: ParamParticleSystem, i: int, ys: np.ndarray) -> float:
        """Recompute particle i's cumulative log-likelihood from its recorded origins."""
        origins = system.origins[i]
        stream, phi = origins[0]
        state, total = self.init_state(np.exp(phi), system.n_members, ys[0], stream)
        for t in range(1, len(origins)):
            stream, phi = origins[t]
            state, inc = self.step_state(np.exp(phi), state, ys[t], t, stream)
            total += inc
        return float(total)

    def state_summary(self, system: ParamParticleSystem) -> np.ndarray:
        weights = system.normalised_weights()
        means = np.full((system.m, self.model.d_x), np.nan)
        for i, state in enumerate(system.states):
            if state is not None and weights[i] > 0:
                means[i] = self.state_mean(state)
        valid = ~np.isnan(means[:, 0])
        return weights[valid] @ means[valid] / weights[valid].sum()

    def run(self, ys: np.ndarray, progress: bool = False) -> FilterResult:
        """
        Filter y_{0:T}.

        Args:
            ys: Observations, shape (T+1, d_y)
            progress: Show a progress bar

        Returns:
            FilterResult with the final system, per-step diagnostics and summaries
        """
        ys = np.asarray(ys, dtype=float).reshape(-1, self.model.d_y)
        record = RunRecord()
        result = FilterResult(system=None, record=record)
        logger.info(f"Running {self.name}: M={self.m}, N={self.n}, T={ys.shape[0] - 1}, seed={self.seed}")

        system = None
        for t in tqdm(range(ys.shape[0]), disable=not progress, desc=self.name):
            wall0, cpu0 = time.perf_counter(), time.process_time()
            row = StepRecord(t=t, ess=float("nan"))
            system = self.initialise(ys, row) if t == 0 else self.step(system, ys, t, row)
            row.wall_ms = (time.perf_counter() - wall0) * 1e3
            row.cpu_ms = (time.process_time() - cpu0) * 1e3
            record.append(row)
            result.summaries.append(PosteriorSummary.from_cloud(t, system.log_params, system.normalised_weights(t)))
            result.state_means.append(self.state_summary(system))

        result.system = system
        logger.info(f"{self.name} finished: final N={system.n_members}, moves={sum(r.moved for r in record.rows)}")
        return result
