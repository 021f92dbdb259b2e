"""Tests for the benchmark models, Euler-Maruyama stepping and data simulation."""
import numpy as np
import pytest
from scipy import stats

from src.core.errors import TransitionFailureError, UnsupportedModelError
from src.models import MODEL_REGISTRY, build_model
from src.models.lorenz96 import Lorenz96Model
from src.models.lotka_volterra import LotkaVolterraModel
from src.models.ou import OuModel, ou_moments
from src.models.sde import STATE_FLOOR, euler_maruyama_step, substep_transition
from src.models.simulate import simulate_dataset
from src.models.sir import SIR_H, SirModel


def chemical_langevin_sir(x, theta):
    """Drift and diffusion rebuilt from the infection and removal reactions at each node."""
    removal, alpha12, alpha21, sigma_beta = theta[:4]
    s1, i1, s2, i2, lb1, lb2 = x
    rates = np.array([
        np.exp(lb1) * (i1 + alpha21 * i2) * s1,
        removal * i1,
        np.exp(lb2) * (i2 + alpha12 * i1) * s2,
        removal * i2,
    ])
    # Columns: infection at 1, removal at 1, infection at 2, removal at 2
    stoich = np.zeros((6, 4))
    stoich[0:2, 0] = [-1.0, 1.0]
    stoich[1, 1] = -1.0
    stoich[2:4, 2] = [-1.0, 1.0]
    stoich[3, 3] = -1.0
    drift = stoich @ rates
    diffusion = stoich @ np.diag(rates) @ stoich.T
    diffusion[4, 4] = diffusion[5, 5] = sigma_beta ** 2
    return drift, diffusion


class TestOu:
    """Closed-form OU transition and observation model."""

    def test_transition_moments(self, ou_model, rng):
        theta = np.array([1.0, 2.0, 1.0])
        x = np.full((200_000, 1), 10.0)
        draws = ou_model.transition_sample(x, theta, rng)[:, 0]
        mean, var = ou_moments(10.0, theta, 1.0)
        assert draws.mean() == pytest.approx(mean, abs=0.01)
        assert draws.var() == pytest.approx(var, rel=0.02)

    def test_transition_logpdf_counts_calls(self, ou_model):
        theta = ou_model.default_theta
        x_prev = np.array([[10.0], [9.0]])
        x_new = np.array([[5.0], [4.0]])
        out = ou_model.transition_logpdf(x_new, x_prev, theta)
        mean, var = ou_moments(x_prev[:, 0], theta, 1.0)
        np.testing.assert_allclose(out, stats.norm.logpdf(x_new[:, 0], mean, np.sqrt(var)))
        assert ou_model.transition_density_calls == 1

    def test_linear_gaussian_transition(self, ou_model):
        theta = np.array([0.5, 3.0, 0.8])
        F, offset, Q = ou_model.linear_gaussian_transition(theta)
        mean, var = ou_moments(4.0, theta, 1.0)
        assert (F @ [4.0] + offset)[0] == pytest.approx(mean)
        assert Q[0, 0] == pytest.approx(var)

    def test_per_member_theta(self, ou_model, rng):
        theta = np.array([[1.0, 2.0, 1e-12], [1.0, 5.0, 1e-12]])
        out = ou_model.transition_sample(np.array([[2.0], [5.0]]), theta, rng)
        np.testing.assert_allclose(out[:, 0], [2.0, 5.0], atol=1e-6)

    def test_nonlinear_obs_plug_in(self):
        model = OuModel(nonlinear_obs=True)
        assert not model.has_linear_gaussian_obs
        obs = model.gaussian_obs(model.default_theta, np.array([3.0]))
        assert obs.R[0, 0] == pytest.approx(3.1)
        with pytest.raises(ValueError):
            model.gaussian_obs(model.default_theta)


class TestEulerMaruyama:
    """Euler-Maruyama stepping and state floors."""

    def test_zero_diffusion_is_euler(self, rng):
        drift = lambda x, th: -x
        diffusion = lambda x, th: np.zeros_like(x)
        out = euler_maruyama_step(drift, diffusion, np.array([[1.0, 2.0]]), None, 0.1, rng)
        np.testing.assert_allclose(out, [[0.9, 1.8]])

    def test_full_matrix_diffusion_variance(self, rng):
        b = np.array([[2.0, 0.5], [0.5, 1.0]])
        drift = lambda x, th: np.zeros_like(x)
        diffusion = lambda x, th: np.broadcast_to(b, (x.shape[0], 2, 2)).copy()
        out = euler_maruyama_step(drift, diffusion, np.zeros((50_000, 2)), None, 0.5, rng)
        np.testing.assert_allclose(np.cov(out.T), 0.5 * b, atol=0.03)

    def test_non_finite_raises(self, rng):
        drift = lambda x, th: np.where(x > 0, np.inf, 0.0)
        diffusion = lambda x, th: np.zeros_like(x)
        with pytest.raises(TransitionFailureError) as info:
            euler_maruyama_step(drift, diffusion, np.array([[-1.0], [1.0]]), None, 0.1, rng)
        assert info.value.member_index == 1

    def test_floor(self, rng):
        drift = lambda x, th: -100.0 * np.ones_like(x)
        diffusion = lambda x, th: np.zeros_like(x)
        out = substep_transition(drift, diffusion, np.array([[1.0, 1.0]]), None, 3, 0.1, rng, floor_idx=[0])
        assert out[0, 0] == STATE_FLOOR
        assert out[0, 1] < 0


class TestLotkaVolterra:
    def test_substeps(self, lv_model):
        assert lv_model.n_substeps == 10

    def test_transition_stays_positive(self, lv_model, rng):
        x = np.tile(lv_model.x0, (500, 1))
        out = lv_model.transition_sample(x, lv_model.default_theta, rng)
        assert out.shape == (500, 2)
        assert np.all(out >= STATE_FLOOR)

    def test_diffusion_positive_semidefinite(self, lv_model, rng):
        x = rng.uniform(0.0, 300.0, (50, 2))
        for b in lv_model.diffusion(x, lv_model.default_theta):
            assert np.linalg.eigvalsh(b).min() >= -1e-9 * np.abs(b).max()

    def test_obs_approximation_variance(self, lv_model):
        obs = lv_model.gaussian_obs(lv_model.default_theta, np.array([30.0, 70.0]))
        assert obs.R[0, 0] == pytest.approx(30.0)
        floored = lv_model.gaussian_obs(lv_model.default_theta, np.array([-5.0, 70.0]))
        assert floored.R[0, 0] == pytest.approx(lv_model.obs_floor)

    def test_no_transition_density(self, lv_model):
        assert not lv_model.has_transition_density
        with pytest.raises(UnsupportedModelError):
            lv_model.transition_logpdf(np.ones((1, 2)), np.ones((1, 2)), lv_model.default_theta)


class TestSir:
    def test_infection_rates(self):
        model = SirModel()
        theta = np.array([0.5, 0.2, 0.3, 0.1, 1.0])
        x = np.array([[100.0, 10.0, 200.0, 20.0, np.log(0.01), np.log(0.02)]])
        lam = model.infection_rates(x, theta)
        assert lam[0, 0] == pytest.approx(0.01 * (10.0 + 0.3 * 20.0) * 100.0)
        assert lam[0, 1] == pytest.approx(0.02 * (20.0 + 0.2 * 10.0) * 200.0)

    def test_observation_approximation(self):
        model = SirModel()
        theta = np.array([0.5, 0.2, 0.3, 0.1, 2.0])
        mean = np.array([100.0, 10.0, 200.0, 20.0, 0.0, 0.0])
        obs = model.gaussian_obs(theta, mean)
        np.testing.assert_allclose(obs.R, 4.0 * np.diag(SIR_H @ mean))

    def test_matches_chemical_langevin(self, rng):
        model = SirModel()
        theta = np.array([0.4, 0.15, 0.25, 0.2, 1.0])
        x = np.column_stack([
            rng.uniform(100.0, 5000.0, 8),
            rng.uniform(1.0, 300.0, 8),
            rng.uniform(100.0, 5000.0, 8),
            rng.uniform(1.0, 300.0, 8),
            rng.uniform(-11.0, -9.0, 8),
            rng.uniform(-11.0, -9.0, 8),
        ])
        drift = model.drift(x, theta)
        diffusion = model.diffusion(x, theta)
        for k in range(x.shape[0]):
            a, b = chemical_langevin_sir(x[k], theta)
            np.testing.assert_allclose(drift[k], a, rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(diffusion[k], b, rtol=1e-12, atol=1e-12)

    def test_diffusion_positive_semidefinite(self, rng):
        model = SirModel()
        x = np.column_stack([rng.uniform(0.0, 5000.0, (20, 4)), rng.uniform(-12.0, -8.0, (20, 2))])
        for b in model.diffusion(x, model.default_theta):
            assert np.linalg.eigvalsh(b).min() >= -1e-9 * np.abs(b).max()

    def test_transition_shape(self, rng):
        model = SirModel()
        out = model.transition_sample(np.tile(model.x0, (20, 1)), model.default_theta, rng)
        assert out.shape == (20, 6)
        assert np.all(out[:, :4] >= STATE_FLOOR)


class TestLorenz96:
    def test_drift_at_constant_state(self):
        model = Lorenz96Model(dim=5)
        x = np.full((1, 5), 2.0)
        # Advection vanishes when all components are equal
        np.testing.assert_allclose(model.drift(x, np.array([1.0, 1.0, 8.0, 1.0])), np.full((1, 5), 6.0))

    @pytest.mark.parametrize("shift", [1, 2, 4])
    def test_drift_equivariant_under_cyclic_shift(self, rng, shift):
        model = Lorenz96Model(dim=6)
        theta = np.array([1.2, 0.9, 8.0, 3.0])
        x = rng.standard_normal((4, 6)) * 3.0
        shifted = model.drift(np.roll(x, shift, axis=1), theta)
        np.testing.assert_allclose(shifted, np.roll(model.drift(x, theta), shift, axis=1), rtol=1e-12)

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            Lorenz96Model(dim=3)

    def test_linear_gaussian_obs(self):
        model = Lorenz96Model(dim=4)
        obs = model.gaussian_obs(model.default_theta)
        np.testing.assert_allclose(obs.R, 25.0 * np.eye(4))
        assert model.describe()["dim"] == 4


class TestRegistryAndSimulation:
    def test_registry(self):
        assert set(MODEL_REGISTRY) == {"ou", "lv", "sir", "lorenz96"}
        assert isinstance(build_model("lorenz96", {"dim": 6}), Lorenz96Model)
        with pytest.raises(ValueError):
            build_model("heston")

    def test_simulation_deterministic(self, ou_model):
        a = simulate_dataset(ou_model, n_obs=6, seed=4)
        b = simulate_dataset(ou_model, n_obs=6, seed=4)
        np.testing.assert_array_equal(a.ys, b.ys)
        np.testing.assert_array_equal(a.times, np.arange(6.0))

    def test_simulation_shapes(self):
        model = LotkaVolterraModel()
        data = simulate_dataset(model, n_obs=3, seed=1, fine_dt=0.01)
        assert data.ys.shape == (3, 1)
        assert data.xs.shape == (3, 2)
        assert data.meta["n_substeps"] == 200
        # The model used for inference keeps its own step
        assert model.dt == 0.2

    def test_simulation_rejects_empty(self, ou_model):
        with pytest.raises(ValueError):
            simulate_dataset(ou_model, n_obs=0)
