import math

import numpy as np
import pytest

from pb2.core.errors import NumericalFailure, TimeOrder
from pb2.kernels import GpHyperparams, GpInputs, composite_cross, composite_gram
from pb2.tvgp import (
    HyperparamBounds,
    factorize,
    fit,
    log_marginal_likelihood,
    optimize_hyperparams,
    posterior,
    standardized_variance,
    window,
)
from tests.conftest import random_dataset


def random_hp(rng, d):
    return GpHyperparams(
        lengthscales=tuple(rng.uniform(0.1, 1.5, size=d)),
        signal_var=float(rng.uniform(0.5, 3.0)),
        noise_var=float(rng.uniform(1e-3, 0.5)),
        omega=float(rng.uniform(0.0, 0.9)),
    )


def dense_posterior(model, queries, t_query):
    """Mean and variance from an explicit inverse of the noisy Gram matrix."""
    hp = model.hp
    noisy = composite_gram(model.inputs, hp) + (hp.noise_var + model.jitter) * np.eye(model.n)
    inverse = np.linalg.inv(noisy)
    cross = composite_cross(queries, t_query, model.inputs, hp)
    mu = model.y_mean + model.y_std * cross @ inverse @ model.targets_std
    var = (hp.signal_var - np.einsum("ij,jk,ik->i", cross, inverse, cross)) * model.y_std**2
    return mu, var


class TestWindow:
    def test_short_history_kept(self):
        assert window(np.array([1, 2, 3]), 5).all()

    def test_exactly_max_records(self):
        times = np.arange(1, 11)
        keep = window(times, 4)
        np.testing.assert_array_equal(times[keep], [7, 8, 9, 10])

    def test_ties_at_cutoff_are_kept(self):
        times = np.array([1, 2, 2, 3, 3])
        keep = window(times, 3)
        np.testing.assert_array_equal(times[keep], [2, 2, 3, 3])


class TestFactorize:
    def test_reports_starting_jitter(self, hp1):
        gram = composite_gram(GpInputs(u=[[0.1], [0.7]], times=[1, 1]), hp1)
        chol, jitter = factorize(gram, hp1)
        assert jitter == pytest.approx(1e-6)
        np.testing.assert_allclose(chol @ chol.T, gram + (hp1.noise_var + jitter) * np.eye(2), atol=1e-14)

    def test_non_finite_gram(self, hp1):
        with pytest.raises(NumericalFailure):
            factorize(np.full((2, 2), np.nan), hp1)


class TestFit:
    def test_single_observation(self, hp1):
        model = fit([([0.5], 1, 5.0)], hp1)
        assert (model.y_mean, model.y_std) == (5.0, 1.0)
        np.testing.assert_array_equal(model.targets_std, [0.0])

    def test_constant_targets(self, hp1):
        model = fit([([0.1], 1, 3.0), ([0.4], 1, 3.0), ([0.9], 2, 3.0)], hp1)
        assert model.y_std == 1.0
        np.testing.assert_array_equal(model.targets_std, np.zeros(3))

    def test_targets_standardized(self, rng, hp1):
        model = fit(random_dataset(rng, 12, 1), hp1)
        assert abs(model.targets_std.mean()) < 1e-12
        assert model.targets_std.std() == pytest.approx(1.0, abs=1e-12)

    def test_alpha_solves_linear_system(self, rng):
        for _ in range(20):
            d = int(rng.integers(1, 4))
            hp = random_hp(rng, d)
            model = fit(random_dataset(rng, int(rng.integers(2, 21)), d), hp)
            noisy = composite_gram(model.inputs, hp) + (hp.noise_var + model.jitter) * np.eye(model.n)
            np.testing.assert_allclose(noisy @ model.alpha, model.targets_std, atol=1e-8)

    def test_window_applied(self, hp1):
        records = [([0.1 * t], t, float(t)) for t in range(1, 9)]
        model = fit(records, hp1, max_records=3)
        assert model.n == 3
        np.testing.assert_array_equal(model.inputs.times, [6, 7, 8])

    def test_rejects_inputs_outside_unit_cube(self, hp1):
        with pytest.raises(ValueError):
            fit([([1.5], 1, 0.0)], hp1)


class TestPosterior:
    def test_single_datum_closed_form(self):
        hp = GpHyperparams(lengthscales=(0.3,), signal_var=1.0, noise_var=0.01, omega=0.0)
        model = fit([([0.4], 1, 2.0)], hp)
        mu, var = posterior(model, [0.4], 1)
        assert mu == 2.0
        assert var == pytest.approx(1.0 - 1.0 / (1.01 + model.jitter), abs=1e-12)
        assert var == pytest.approx(0.0099, abs=1e-4)

    def test_matches_dense_inverse(self, rng):
        for _ in range(50):
            d = int(rng.integers(1, 4))
            hp = random_hp(rng, d)
            model = fit(random_dataset(rng, int(rng.integers(1, 21)), d), hp)
            queries = rng.uniform(size=(10, d))
            t_query = model.max_time + int(rng.integers(0, 3))
            mu, var = posterior(model, queries, t_query)
            mu_dense, var_dense = dense_posterior(model, queries, t_query)
            np.testing.assert_allclose(mu, mu_dense, rtol=0, atol=1e-8)
            np.testing.assert_allclose(var, np.maximum(var_dense, 0.0), rtol=0, atol=1e-8)

    def test_variance_below_prior(self, rng, hp1):
        model = fit(random_dataset(rng, 15, 1), hp1)
        _, var = posterior(model, rng.uniform(size=(200, 1)), model.max_time)
        assert np.all(var >= 0.0)
        assert np.all(var <= hp1.signal_var * model.y_std**2 + 1e-9)

    def test_scalar_and_batch_agree(self, rng, hp1):
        model = fit(random_dataset(rng, 6, 1), hp1)
        mu, var = posterior(model, [[0.25], [0.75]], model.max_time)
        mu1, var1 = posterior(model, [0.75], model.max_time)
        assert mu[1] == pytest.approx(mu1, abs=1e-14)
        assert var[1] == pytest.approx(var1, abs=1e-14)

    def test_query_before_data(self, hp1):
        model = fit([([0.2], 3, 1.0)], hp1)
        with pytest.raises(TimeOrder):
            posterior(model, [0.2], 2)

    def test_variance_ignores_targets(self, rng):
        hp = GpHyperparams(lengthscales=(0.2, 0.4), signal_var=1.3, noise_var=0.02, omega=0.3)
        data = random_dataset(rng, 15, 2)
        flipped = [(u, t, -y) for u, t, y in data]
        doubled = [(u, t, 2.0 * y) for u, t, y in data]
        queries = rng.uniform(size=(100, 2))
        t_query = max(t for _, t, _ in data) + 1
        _, var = posterior(fit(data, hp), queries, t_query)
        _, var_flipped = posterior(fit(flipped, hp), queries, t_query)
        _, var_doubled = posterior(fit(doubled, hp), queries, t_query)
        np.testing.assert_array_equal(var, var_flipped)
        np.testing.assert_array_equal(4.0 * var, var_doubled)

    def test_standardized_variance_ignores_targets(self, rng):
        hp = GpHyperparams(lengthscales=(0.2, 0.4), signal_var=1.3, noise_var=0.02, omega=0.3)
        data = random_dataset(rng, 15, 2)
        other = [(u, t, float(y)) for (u, t, _), y in zip(data, rng.exponential(scale=7.0, size=len(data)))]
        queries = rng.uniform(size=(100, 2))
        t_query = max(t for _, t, _ in data) + 1
        model, model_other = fit(data, hp), fit(other, hp)
        assert model.y_std != model_other.y_std
        std_var = standardized_variance(model, queries, t_query)
        np.testing.assert_array_equal(std_var, standardized_variance(model_other, queries, t_query))
        _, var = posterior(model, queries, t_query)
        np.testing.assert_allclose(var, std_var * model.y_std**2, rtol=1e-14, atol=0)

    def test_old_data_forgotten(self):
        hp = GpHyperparams(lengthscales=(0.3,), signal_var=1.0, noise_var=0.01, omega=0.5)
        model = fit([([0.5], 1, 1.0), ([0.9], 1, -1.0)], hp)
        _, near = posterior(model, [0.5], 1)
        _, later = posterior(model, [0.5], 6)
        assert later > near


class TestLogMarginalLikelihood:
    def test_finite_for_random_hyperparameters(self, rng):
        data = random_dataset(rng, 12, 2)
        for _ in range(100):
            assert math.isfinite(log_marginal_likelihood(data, random_hp(rng, 2)))

    def test_matches_dense_formula(self, rng):
        for _ in range(20):
            d = int(rng.integers(1, 4))
            hp = random_hp(rng, d)
            data = random_dataset(rng, int(rng.integers(1, 21)), d)
            model = fit(data, hp)
            noisy = composite_gram(model.inputs, hp) + (hp.noise_var + model.jitter) * np.eye(model.n)
            targets = model.targets_std
            _, logdet = np.linalg.slogdet(noisy)
            expected = (
                -0.5 * targets @ np.linalg.solve(noisy, targets)
                - 0.5 * logdet
                - 0.5 * model.n * math.log(2 * math.pi)
            )
            assert log_marginal_likelihood(data, hp) == pytest.approx(expected, abs=1e-6)

    def test_duplicate_record_stays_finite(self, hp1):
        data = [([0.1], 1, 0.3), ([0.5], 1, -0.2), ([0.8], 2, 0.9)]
        assert math.isfinite(log_marginal_likelihood(data + [data[-1]], hp1))


def static_dataset(rng, rounds=8, per_round=6, noise=0.05):
    u = rng.uniform(size=(rounds * per_round, 1))
    times = np.repeat(np.arange(1, rounds + 1), per_round)
    y = np.sin(6.0 * u[:, 0]) + rng.normal(0.0, noise, size=len(u))
    return [(u[i], int(times[i]), float(y[i])) for i in range(len(u))]


def drifting_dataset(rng, omega=0.5, rounds=8, per_round=6):
    hp = GpHyperparams(lengthscales=(0.25,), signal_var=1.0, noise_var=1e-3, omega=omega)
    inputs = GpInputs(u=rng.uniform(size=(rounds * per_round, 1)), times=np.repeat(np.arange(1, rounds + 1), per_round))
    cov = composite_gram(inputs, hp) + hp.noise_var * np.eye(len(inputs))
    y = rng.multivariate_normal(np.zeros(len(inputs)), cov)
    return [(inputs.u[i], int(inputs.times[i]), float(y[i])) for i in range(len(inputs))]


class TestOptimizeHyperparams:
    def test_never_worse_than_defaults(self, rng):
        data = random_dataset(rng, 15, 2)
        defaults = GpHyperparams.default(2)
        hp = optimize_hyperparams(data, HyperparamBounds(), rng, n_starts=3, max_iter=60)
        assert log_marginal_likelihood(data, hp) >= log_marginal_likelihood(data, defaults) - 1e-12

    def test_deterministic_given_seed(self):
        data = random_dataset(np.random.default_rng(1), 12, 1)
        a = optimize_hyperparams(data, HyperparamBounds(), np.random.default_rng(9), n_starts=3, max_iter=60)
        b = optimize_hyperparams(data, HyperparamBounds(), np.random.default_rng(9), n_starts=3, max_iter=60)
        assert a == b

    def test_single_record_returns_defaults(self, rng):
        hp = optimize_hyperparams([([0.3], 1, 1.0)], HyperparamBounds(), rng)
        assert hp == GpHyperparams.default(1)

    def test_defaults_clipped_into_omega_box(self, rng):
        bounds = HyperparamBounds(omega=(0.3, 0.6))
        assert optimize_hyperparams([([0.3], 1, 1.0)], bounds, rng).omega == 0.3
        hp = optimize_hyperparams(random_dataset(rng, 12, 1), bounds, rng, n_starts=2, max_iter=40)
        assert 0.3 * (1 - 1e-9) <= hp.omega <= 0.6 * (1 + 1e-9)

    def test_fixed_omega(self, rng):
        hp = optimize_hyperparams(random_dataset(rng, 10, 1), HyperparamBounds(), rng, n_starts=2, fix_omega=0.0)
        assert hp.omega == 0.0

    def test_within_bounds(self, rng):
        bounds = HyperparamBounds()
        hp = optimize_hyperparams(random_dataset(rng, 15, 2), bounds, rng, n_starts=3, max_iter=60)
        for ls in hp.lengthscales:
            assert bounds.lengthscale[0] * (1 - 1e-9) <= ls <= bounds.lengthscale[1] * (1 + 1e-9)
        assert bounds.omega[0] * (1 - 1e-9) <= hp.omega <= bounds.omega[1] * (1 + 1e-9)

    @pytest.mark.slow
    def test_static_objective_gives_small_omega(self):
        omegas = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            hp = optimize_hyperparams(static_dataset(rng), HyperparamBounds(), rng, n_starts=4, max_iter=150)
            omegas.append(hp.omega)
        assert np.median(omegas) <= 0.1

    @pytest.mark.slow
    def test_drifting_objective_gives_large_omega(self):
        omegas = []
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            hp = optimize_hyperparams(drifting_dataset(rng), HyperparamBounds(), rng, n_starts=4, max_iter=150)
            omegas.append(hp.omega)
        assert np.median(omegas) >= 0.2
