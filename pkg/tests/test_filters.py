"""Tests for the parameter-particle system, dynamic N and the nested filters."""
import numpy as np
import pytest

from src.core.errors import NumericalError, ParticleCollapseError, UnsupportedModelError
from src.core.rng import RngStream
from src.enkf.augmented import aenkf_run
from src.enkf.liu_west import LiuWestConfig
from src.filters.dynamic_n import adapt_n, estimate_sigma2_n, exchange, grow_n
from src.filters.ibis import KalmanIbis
from src.filters.nenkf import NestedEnKF
from src.filters.penkf import Penkf
from src.filters.smc2 import Smc2
from src.filters.system import (
    MoveConfig,
    ParamParticleSystem,
    PosteriorSummary,
    RunRecord,
    StepRecord,
    TriggerConfig,
    weighted_quantile,
)
from src.models.lorenz96 import LORENZ_TRUE_THETA, Lorenz96Model
from src.models.ou import OuModel
from src.models.simulate import simulate_dataset
from src.rejuvenate.proposals import MhProposalConfig


def make_system(m=4, n=10, log_weights=None):
    phis = np.arange(m * 2, dtype=float).reshape(m, 2) / 10.0
    lw = np.zeros(m) if log_weights is None else np.asarray(log_weights, dtype=float)
    return ParamParticleSystem(
        log_params=phis,
        log_weights=lw,
        logliks=np.full(m, -5.0),
        states=[f"state{i}" for i in range(m)],
        increments=[[-5.0] for _ in range(m)],
        n_members=n,
    )


class TestSystem:
    """Bookkeeping of the weighted parameter cloud."""

    def test_take_resets_weights(self):
        system = make_system(log_weights=[0.0, -1.0, -2.0, -3.0])
        taken = system.take(np.array([0, 0, 2, 3]))
        np.testing.assert_array_equal(taken.log_weights, np.zeros(4))
        assert taken.states == ["state0", "state0", "state2", "state3"]
        assert taken.unique_count() == 3

    def test_weighted_mean(self):
        system = make_system(m=2, log_weights=[0.0, -np.inf])
        np.testing.assert_allclose(system.weighted_mean(), system.log_params[0])

    def test_trigger_validation(self):
        with pytest.raises(ValueError):
            TriggerConfig(ess_fraction=1.0)
        with pytest.raises(ValueError):
            TriggerConfig(growth="tripling")
        with pytest.raises(ValueError):
            TriggerConfig(variance_runs=1)
        with pytest.raises(ValueError):
            MoveConfig(k=0)


class TestRunRecord:
    def test_monotone_time(self):
        record = RunRecord()
        record.append(StepRecord(t=0, ess=1.0))
        with pytest.raises(ValueError):
            record.append(StepRecord(t=0, ess=1.0))

    def test_frame_excludes_timing(self):
        record = RunRecord()
        record.append(StepRecord(t=0, ess=3.0, wall_ms=5.0, cpu_ms=4.0))
        frame = record.to_frame()
        assert "wall_ms" not in frame.columns
        assert "wall_ms" in record.to_frame(include_timing=True).columns
        assert record.total_wall_ms() == 5.0


class TestSummaries:
    """Weighted quantiles and posterior summaries."""

    def test_quantile_matches_sort_with_equal_weights(self, rng):
        values = rng.standard_normal(101)
        weights = np.full(101, 1.0 / 101)
        assert weighted_quantile(values, weights, 0.5) == pytest.approx(np.sort(values)[50])

    def test_quantile_point_mass(self):
        values = np.array([1.0, 5.0, 9.0])
        assert weighted_quantile(values, np.array([0.0, 1.0, 0.0]), 0.025) == 5.0
        assert weighted_quantile(values, np.array([0.0, 1.0, 0.0]), 0.975) == 5.0

    def test_summary_from_cloud(self):
        phis = np.array([[0.0], [2.0]])
        summary = PosteriorSummary.from_cloud(3, phis, np.array([0.5, 0.5]))
        assert summary.t == 3
        assert summary.mean[0] == pytest.approx(1.0)
        assert summary.sd[0] == pytest.approx(1.0)
        assert summary.lower[0] == 0.0 and summary.upper[0] == 2.0


class TestDynamicN:
    """Variance estimation, growth and weight-one exchange."""

    def test_sigma2_is_sample_variance(self):
        evaluator = lambda phi, stream: float(stream.key[-1])
        sigma2 = estimate_sigma2_n(np.zeros(2), evaluator, 6, RngStream(0))
        assert sigma2 == pytest.approx(np.var(np.arange(6.0), ddof=1))

    def test_sigma2_drops_failures(self):
        def evaluator(phi, stream):
            if stream.key[-1] == 0:
                raise NumericalError("failed run")
            return float(stream.key[-1])

        sigma2 = estimate_sigma2_n(np.zeros(2), evaluator, 4, RngStream(0))
        assert sigma2 == pytest.approx(np.var([1.0, 2.0, 3.0], ddof=1))

    def test_sigma2_needs_two_survivors(self):
        evaluator = lambda phi, stream: -np.inf if stream.key[-1] else 0.0
        with pytest.raises(NumericalError):
            estimate_sigma2_n(np.zeros(2), evaluator, 3, RngStream(0))

    def test_grow_n_caps(self):
        trigger = TriggerConfig(n_max=50)
        assert grow_n(10, 2.0, trigger) == 20
        assert grow_n(10, 2.5, trigger) == 25
        assert grow_n(40, 2.0, trigger) == 50

    def test_exchange_keeps_weights(self):
        system = make_system(log_weights=[0.0, -1.0, -2.0, -3.0])
        rerun = lambda i, phi, n: (-float(n), f"fresh{i}", [-float(n)])
        out = exchange(system, 25, rerun)
        np.testing.assert_array_equal(out.log_weights, system.log_weights)
        np.testing.assert_array_equal(out.logliks, np.full(4, -25.0))
        assert out.n_members == 25
        assert out.states[2] == "fresh2"

    def test_adapt_below_threshold_is_noop(self):
        system = make_system()
        out = adapt_n(system, 1.0, TriggerConfig(sigma2_threshold=1.5), lambda i, phi, n: None)
        assert out is system

    def test_variance_two_doubles_n_with_identical_weights(self):
        system = make_system(n=10, log_weights=[0.0, -0.5, -1.0, -4.0])
        before = system.normalised_weights()
        rerun = lambda i, phi, n: (-3.0 * i, None, [-3.0 * i])
        out = adapt_n(system, 2.0, TriggerConfig(sigma2_threshold=1.5), rerun)
        assert out.n_members == 20
        np.testing.assert_array_equal(out.normalised_weights(), before)

    def test_adapt_above_threshold_grows(self):
        system = make_system(n=10)
        rerun = lambda i, phi, n: (-1.0, None, [-1.0])
        out = adapt_n(system, 2.5, TriggerConfig(sigma2_threshold=1.5), rerun)
        assert out.n_members == 25


@pytest.fixture
def small_kwargs():
    return dict(trigger=TriggerConfig(variance_runs=3), seed=3)


class TestNestedEnKF:
    """End-to-end runs of the nested EnKF on short OU series."""

    def test_run_records_every_step(self, ou_model, ou_data, small_kwargs):
        result = NestedEnKF(ou_model, 40, 15, **small_kwargs).run(ou_data.ys)
        T = ou_data.ys.shape[0]
        assert len(result.record) == T
        assert len(result.summaries) == T
        assert len(result.state_means) == T
        assert all(1.0 - 1e-9 <= r.ess <= 40.0 + 1e-9 for r in result.record.rows)
        assert np.all(np.isfinite(result.final.mean))

    def test_deterministic(self, ou_model, ou_data, small_kwargs):
        a = NestedEnKF(ou_model, 30, 10, **small_kwargs).run(ou_data.ys)
        b = NestedEnKF(ou_model, 30, 10, **small_kwargs).run(ou_data.ys)
        np.testing.assert_array_equal(a.final.mean, b.final.mean)
        np.testing.assert_array_equal(a.system.logliks, b.system.logliks)

    def test_thread_count_does_not_change_result(self, ou_model, ou_data, small_kwargs):
        a = NestedEnKF(ou_model, 30, 10, n_jobs=1, **small_kwargs).run(ou_data.ys)
        b = NestedEnKF(ou_model, 30, 10, n_jobs=2, **small_kwargs).run(ou_data.ys)
        np.testing.assert_array_equal(a.final.mean, b.final.mean)
        assert a.system.n_members == b.system.n_members

    def test_moves_track_diagnostics(self, ou_model, ou_data, small_kwargs):
        result = NestedEnKF(ou_model, 40, 15, **small_kwargs).run(ou_data.ys)
        moved = [r for r in result.record.rows if r.moved]
        assert moved, "an OU run from the prior should trigger at least one move"
        for row in moved:
            assert row.resampled
            assert 0.0 <= row.acceptance_rate <= 1.0
            assert row.stage2_evals <= row.stage1_evals
            assert row.n_members >= 15

    def test_moves_restore_particle_diversity(self, ou_model, ou_data, small_kwargs):
        result = NestedEnKF(ou_model, 40, 15, **small_kwargs).run(ou_data.ys)
        moved = [r for r in result.record.rows if r.moved]
        assert all(r.unique_after >= r.unique_before for r in moved)
        assert sum(r.unique_after for r in moved) > sum(r.unique_before for r in moved)

    def test_loglik_equals_sum_of_increments_after_moves(self, ou_model, ou_data, small_kwargs):
        result = NestedEnKF(ou_model, 40, 15, **small_kwargs).run(ou_data.ys)
        assert any(r.moved for r in result.record.rows)
        for loglik, increments in zip(result.system.logliks, result.system.increments):
            assert len(increments) == ou_data.ys.shape[0]
            assert loglik == pytest.approx(sum(increments), abs=1e-10)

    def test_zero_ess_fraction_never_resamples(self, ou_model, ou_data):
        result = NestedEnKF(ou_model, 20, 10, trigger=TriggerConfig(ess_fraction=0.0), seed=2).run(ou_data.ys)
        assert not any(r.resampled or r.moved for r in result.record.rows)
        assert result.system.unique_count() == 20
        assert result.system.n_members == 10

    def test_single_parameter_particle(self, ou_model, ou_data):
        result = NestedEnKF(ou_model, 1, 10, seed=0).run(ou_data.ys)
        assert all(r.ess == pytest.approx(1.0) for r in result.record.rows)
        assert not any(r.moved for r in result.record.rows)
        assert np.isfinite(result.system.logliks[0])

    def test_growth_respects_cap(self, ou_model, ou_data):
        trigger = TriggerConfig(variance_runs=3, sigma2_threshold=1e-6, n_max=20)
        result = NestedEnKF(ou_model, 30, 10, trigger=trigger, seed=1).run(ou_data.ys)
        assert result.system.n_members <= 20

    def test_without_delayed_acceptance(self, ou_model, ou_data):
        move_cfg = MoveConfig(delayed_acceptance=False)
        result = NestedEnKF(ou_model, 30, 10, move_cfg=move_cfg, trigger=TriggerConfig(growth="none")).run(ou_data.ys)
        moved = [r for r in result.record.rows if r.moved]
        assert all(r.n_members == 10 for r in result.record.rows)
        for row in moved:
            assert row.stage2_evals <= row.stage1_evals

    def test_invalid_sizes(self, ou_model):
        with pytest.raises(ValueError):
            NestedEnKF(ou_model, 0, 10)
        with pytest.raises(ValueError):
            NestedEnKF(ou_model, 10, 0)


class TestOtherFilters:
    def test_penkf_never_moves(self, ou_model, ou_data):
        result = Penkf(ou_model, 40, 15, liu_west=LiuWestConfig(0.97), seed=2).run(ou_data.ys)
        assert not any(r.moved for r in result.record.rows)
        assert result.system.n_members == 15

    def test_smc2_doubling_rule(self, ou_model, ou_data):
        trigger = TriggerConfig(growth="doubling", acceptance_threshold=1.01, n_max=40)
        result = Smc2(ou_model, 30, 10, trigger=trigger, seed=4).run(ou_data.ys)
        if any(r.moved for r in result.record.rows):
            assert result.system.n_members > 10
        assert result.system.n_members <= 40

    def test_kalman_ibis(self, ou_model, ou_data):
        result = KalmanIbis(ou_model, 50, seed=0).run(ou_data.ys)
        assert np.all(np.isfinite(result.final.mean))
        assert all(r.n_members == 1 for r in result.record.rows)

    def test_kalman_ibis_needs_linear_model(self, lv_model):
        with pytest.raises(UnsupportedModelError):
            KalmanIbis(lv_model, 10)

    def test_all_particles_collapse(self, ou_data):
        class Impossible(OuModel):
            def obs_logpdf(self, y, x, theta):
                return np.full(np.atleast_2d(x).shape[0], -np.inf)

        with pytest.raises(ParticleCollapseError):
            Smc2(Impossible(), 5, 5).run(ou_data.ys)

    def test_common_random_numbers_share_streams(self, ou_model):
        f = NestedEnKF(ou_model, 5, 5, common_random_numbers=True)
        assert f.slot_stream(0) == f.slot_stream(3)
        g = NestedEnKF(ou_model, 5, 5)
        assert g.slot_stream(0) != g.slot_stream(3)


class TestReplay:
    """Recorded stream origins reproduce every particle's log-likelihood."""

    @pytest.mark.parametrize("filter_cls", [NestedEnKF, Smc2, Penkf])
    def test_replay_reproduces_logliks(self, ou_model, ou_data, filter_cls):
        f = filter_cls(ou_model, 30, 10, trigger=TriggerConfig(variance_runs=3, n_max=200), seed=3)
        result = f.run(ou_data.ys)
        system = result.system
        assert all(len(o) == ou_data.ys.shape[0] for o in system.origins)
        for i in range(system.m):
            assert f.replay(system, i, ou_data.ys) == pytest.approx(system.logliks[i], abs=1e-9)

    def test_origins_follow_resampling(self):
        system = make_system(m=3)
        system.origins = [[(RngStream(0, (k,)), system.log_params[k])] for k in range(3)]
        taken = system.take(np.array([2, 2, 0]))
        assert taken.origins[0][0][0] == RngStream(0, (2,))
        assert taken.origins[2][0][0] == RngStream(0, (0,))


@pytest.fixture(scope="module")
def ou_benchmark():
    """Fifty-one OU observations with an exact-likelihood IBIS posterior mean."""
    model = OuModel()
    data = simulate_dataset(model, n_obs=51, seed=17)
    reference = KalmanIbis(model, 2000, seed=0).run(data.ys).final.mean
    return model, data, reference


class TestOuBenchmark:
    """Posterior-mean accuracy against the exact-likelihood reference."""

    @pytest.mark.slow
    def test_nested_enkf_bias_and_rmse(self, ou_benchmark):
        model, data, reference = ou_benchmark
        estimates = np.array([
            NestedEnKF(model, 1000, 10, move_cfg=MoveConfig(k=3), seed=seed).run(data.ys).final.mean
            for seed in range(1, 6)
        ])
        errors = estimates - reference
        # Five replicates, so the bounds carry extra Monte Carlo slack
        assert np.all(np.abs(errors.mean(axis=0)) <= 0.05)
        assert np.all(np.sqrt((errors ** 2).mean(axis=0)) <= 0.08)

    @pytest.mark.slow
    def test_augmented_enkf_misses_scale(self, ou_benchmark):
        model, data, reference = ou_benchmark
        estimates = np.array([
            aenkf_run(model, 5000, data.ys, LiuWestConfig(0.97), RngStream(seed)).ensemble.log_params.mean(axis=0)
            for seed in range(3)
        ])
        assert abs(estimates[:, 2].mean() - reference[2]) >= 0.3


@pytest.fixture(scope="module")
def lorenz_data():
    model = Lorenz96Model(dim=5)
    return model, simulate_dataset(model, n_obs=16, seed=5)


class TestLorenz96Filters:
    @pytest.mark.slow
    def test_credible_interval_covers_truth(self, lorenz_data):
        model, data = lorenz_data
        move_cfg = MoveConfig(proposal=MhProposalConfig(iterations=5))
        final = NestedEnKF(model, 500, 20, move_cfg=move_cfg, seed=0).run(data.ys).final
        truth = np.log(LORENZ_TRUE_THETA)
        assert np.all(final.lower <= truth)
        assert np.all(truth <= final.upper)

    @pytest.mark.slow
    def test_nested_enkf_needs_smaller_ensembles_than_smc2(self, lorenz_data):
        model, data = lorenz_data
        trigger = TriggerConfig(n_max=2000)
        nenkf = NestedEnKF(model, 100, 20, trigger=trigger, seed=1).run(data.ys)
        smc2 = Smc2(model, 100, 20, trigger=trigger, seed=1).run(data.ys)
        assert nenkf.system.n_members < smc2.system.n_members

    def test_short_run(self, lorenz_data):
        model, data = lorenz_data
        result = NestedEnKF(model, 10, 8, trigger=TriggerConfig(variance_runs=2, n_max=16), seed=2).run(data.ys[:4])
        assert len(result.summaries) == 4
        assert result.final.mean.shape == (4,)
        assert np.all(result.final.lower <= result.final.upper)
