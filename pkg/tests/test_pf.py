"""Tests for weight handling, resampling and the bootstrap particle filter."""
import numpy as np
import pytest

from src.core.errors import ParticleCollapseError
from src.core.kalman import kalman_filter_exact
from src.core.rng import RngStream
from src.models.ou import OuModel
from src.pf.particle_filter import pf_init, pf_run, pf_step
from src.pf.resampling import (
    ess,
    ess_from_log,
    get_resampler,
    log_normalise,
    resample_multinomial,
    resample_systematic,
)


class TestWeights:
    """Log-space normalisation and effective sample size."""

    def test_log_normalise(self):
        weights, log_total = log_normalise(np.log([1.0, 3.0]))
        np.testing.assert_allclose(weights, [0.25, 0.75])
        assert log_total == pytest.approx(np.log(4.0))

    def test_log_normalise_large_values(self):
        weights, _ = log_normalise(np.array([1000.0, 1000.0]))
        np.testing.assert_allclose(weights, [0.5, 0.5])

    def test_all_minus_inf_collapses(self):
        with pytest.raises(ParticleCollapseError) as info:
            log_normalise(np.full(3, -np.inf), time_index=4)
        assert info.value.time_index == 4

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            log_normalise(np.array([0.0, np.nan]))

    def test_ess_bounds(self):
        assert ess(np.full(8, 1.0 / 8)) == pytest.approx(8.0)
        assert ess(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)
        assert ess_from_log(np.array([0.0, -np.inf])) == pytest.approx(1.0)

    def test_ess_permutation_invariant(self, rng):
        weights = rng.dirichlet(np.ones(20))
        assert ess(weights[rng.permutation(20)]) == pytest.approx(ess(weights), rel=1e-12)

    def test_unnormalised_rejected(self):
        with pytest.raises(ValueError):
            ess(np.array([0.5, 0.6]))


class TestResampling:
    """Multinomial and systematic index draws."""

    def test_systematic_counts(self, rng):
        weights = np.array([0.1, 0.25, 0.4, 0.25])
        n = 40
        idx = resample_systematic(weights, n, rng)
        counts = np.bincount(idx, minlength=4)
        assert counts.sum() == n
        assert np.all(counts >= np.floor(n * weights) - 1e-9)
        assert np.all(counts <= np.ceil(n * weights) + 1e-9)

    def test_multinomial_frequencies(self, rng):
        weights = np.array([0.2, 0.5, 0.3])
        idx = resample_multinomial(weights, 100_000, rng)
        np.testing.assert_allclose(np.bincount(idx) / idx.size, weights, atol=0.01)

    @pytest.mark.parametrize("name", ["multinomial", "systematic"])
    def test_offspring_counts_unbiased(self, rng, name):
        weights = np.array([0.5, 0.25, 0.15, 0.07, 0.03])
        resampler = get_resampler(name)
        reps, count = 2000, 50
        counts = np.array([np.bincount(resampler(weights, count, rng), minlength=5) for _ in range(reps)])
        # Multinomial spread bounds the systematic one
        se = np.sqrt(count * weights * (1.0 - weights) / reps)
        assert np.all(np.abs(counts.mean(axis=0) - count * weights) <= 4.0 * se)

    def test_zero_weight_never_drawn(self, rng):
        idx = resample_systematic(np.array([0.0, 1.0, 0.0]), 10, rng)
        assert np.all(idx == 1)

    def test_unknown_resampler(self):
        assert get_resampler("systematic") is resample_systematic
        with pytest.raises(ValueError):
            get_resampler("stratified")


class TestParticleFilter:
    """Bootstrap particle filter on the linear-Gaussian OU model."""

    @pytest.mark.slow
    def test_loglik_close_to_kalman(self, ou_model, ou_data):
        theta = ou_model.default_theta
        exact = kalman_filter_exact(ou_model, theta, ou_data.ys).loglik
        estimates = [pf_run(ou_model, theta, 5000, ou_data.ys, RngStream(s)).loglik for s in range(3)]
        assert np.mean(estimates) == pytest.approx(exact, abs=1.0)

    @pytest.mark.slow
    def test_likelihood_estimate_unbiased(self, ou_model, ou_data):
        theta = ou_model.default_theta
        exact = kalman_filter_exact(ou_model, theta, ou_data.ys).loglik
        ratios = np.exp([pf_run(ou_model, theta, 100, ou_data.ys, RngStream(s)).loglik - exact for s in range(500)])
        se = ratios.std(ddof=1) / np.sqrt(ratios.size)
        assert abs(ratios.mean() - 1.0) <= 3.0 * se

    def test_deterministic_given_stream(self, ou_model, ou_data):
        a = pf_run(ou_model, ou_model.default_theta, 100, ou_data.ys, RngStream(5))
        b = pf_run(ou_model, ou_model.default_theta, 100, ou_data.ys, RngStream(5))
        assert a.loglik == b.loglik
        np.testing.assert_array_equal(a.particles.particles, b.particles.particles)

    def test_never_evaluates_transition_density(self, ou_model, ou_data):
        pf_run(ou_model, ou_model.default_theta, 50, ou_data.ys, RngStream(0))
        assert ou_model.transition_density_calls == 0

    def test_increments_sum(self, ou_model, ou_data):
        result = pf_run(ou_model, ou_model.default_theta, 50, ou_data.ys, RngStream(0))
        assert len(result.increments) == ou_data.ys.shape[0]
        assert result.loglik == pytest.approx(sum(result.increments))

    def test_single_particle(self, ou_model, ou_data):
        result = pf_run(ou_model, ou_model.default_theta, 1, ou_data.ys, RngStream(0))
        assert np.isfinite(result.loglik)

    def test_zero_particles_rejected(self, ou_model):
        with pytest.raises(ValueError):
            pf_init(ou_model, ou_model.default_theta, 0, np.array([10.0]), RngStream(0))

    def test_collapse_raises(self, ou_data):
        class Impossible(OuModel):
            def obs_logpdf(self, y, x, theta):
                return np.full(np.atleast_2d(x).shape[0], -np.inf)

        model = Impossible()
        with pytest.raises(ParticleCollapseError):
            pf_init(model, model.default_theta, 10, ou_data.ys[0], RngStream(0))

    def test_step_records_ancestors(self, ou_model, ou_data):
        stream = RngStream(1)
        particles, _ = pf_init(ou_model, ou_model.default_theta, 20, ou_data.ys[0], stream)
        nxt, inc = pf_step(ou_model, ou_model.default_theta, particles, ou_data.ys[1], 1, stream)
        assert nxt.ancestors.shape == (20,)
        assert np.isfinite(inc)
