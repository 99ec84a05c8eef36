"""Benchmark models: hazards, Gillespie, particle filter, RKF45, LNA."""

import math

import numpy as np
import pytest
from scipy import linalg

import damcmc.models as M
from damcmc.models import (
    Dataset,
    IntegrationError,
    LnaState,
    ar_hazards,
    autoregulatory,
    bootstrap_pf_loglik,
    corrupt_observations,
    gillespie_simulate,
    lna_marginal_loglik,
    lna_ode_rhs,
    lna_simulate,
    load_dataset,
    log_prior,
    lotka_volterra,
    lv_hazards,
    particle_filter_loglik,
    rkf45_integrate,
    save_dataset,
    simulate_dataset,
)
from damcmc.models.networks import ReactionNetwork


def birth_death_net():
    """Single species with birth X -> 2X and death X -> 0."""
    S = np.array([[1.0, -1.0]])
    return ReactionNetwork(
        name="birth-death",
        species=("x",),
        stoichiometry=S,
        hazards=lambda x, nu: np.array([nu[0] * x[0], nu[1] * x[0]]),
        hazard_jacobian=lambda x, nu: np.array([[nu[0]], [nu[1]]]),
    )


def immigration_net():
    """Constant-rate production plus linear death, stays near nu0/nu1."""
    S = np.array([[1.0, -1.0]])
    return ReactionNetwork(
        name="immigration-death",
        species=("x",),
        stoichiometry=S,
        hazards=lambda x, nu: np.array([nu[0], nu[1] * x[0]]),
        hazard_jacobian=lambda x, nu: np.array([[0.0], [nu[1]]]),
    )


class TestHazards:
    def test_lv_hand_values(self):
        np.testing.assert_allclose(
            lv_hazards((71, 79), (1.0, 0.005, 0.6)), [71.0, 28.045, 47.4]
        )

    def test_lv_absorbing_and_zero_rates(self):
        np.testing.assert_array_equal(lv_hazards((0, 0), (1.0, 0.005, 0.6)), np.zeros(3))
        np.testing.assert_array_equal(lv_hazards((5, 5), (0.0, 0.0, 0.0)), np.zeros(3))

    def test_lv_negative_state_rejected(self):
        with pytest.raises(ValueError):
            lv_hazards((-1, 3), (1.0, 1.0, 1.0))

    def test_ar_hand_values(self):
        got = ar_hazards((5, 8, 8, 8), (0.1, 0.7, 0.35, 0.2, 0.1, 0.9, 0.3, 0.1), K=10)
        np.testing.assert_allclose(got, [4.0, 3.5, 1.75, 1.6, 2.8, 7.2, 2.4, 0.8])

    def test_ar_combinatorial_floor(self):
        nu = np.ones(8)
        assert ar_hazards((5, 1, 1, 1), nu, K=10)[4] == 0.0  # one protein cannot dimerise

    def test_ar_all_dna_bound_or_free(self):
        nu = np.ones(8)
        assert ar_hazards((10, 1, 2, 1), nu, K=10)[1] == 0.0  # nothing to unbind
        with pytest.raises(ValueError):
            ar_hazards((11, 1, 2, 1), nu, K=10)

    def test_stoichiometry_against_reaction_semantics(self):
        lv = lotka_volterra()
        # prey birth, predation (prey -1 predator +1), predator death
        np.testing.assert_array_equal(lv.stoichiometry[:, 0], [1, 0])
        np.testing.assert_array_equal(lv.stoichiometry[:, 1], [-1, 1])
        np.testing.assert_array_equal(lv.stoichiometry[:, 2], [0, -1])
        ar = autoregulatory()
        expected = {
            0: {"dna": -1, "p2": -1},          # binding
            1: {"dna": 1, "p2": 1},            # unbinding
            2: {"rna": 1},                     # transcription
            3: {"p": 1},                       # translation
            4: {"p": -2, "p2": 1},             # dimerisation
            5: {"p": 2, "p2": -1},             # reverse dimerisation
            6: {"rna": -1},                    # RNA decay
            7: {"p": -1},                      # protein decay
        }
        for j, changes in expected.items():
            col = ar.stoichiometry[:, j]
            for i, name in enumerate(ar.species):
                assert col[i] == changes.get(name, 0), (j, name)


class TestGillespie:
    def test_event_count_is_poisson(self):
        # pure immigration: the number of events in [0, T] is Poisson(nu T)
        net = immigration_net()
        rng = np.random.default_rng(0)
        T, nu = 5.0, 1.0
        counts = []
        for _ in range(1000):
            path = gillespie_simulate(net, [0.0], (nu, 0.0), T, [T], rng)
            counts.append(path[0, 0])
        counts = np.array(counts)
        mean = nu * T
        se = math.sqrt(mean / len(counts))
        assert abs(counts.mean() - mean) < 3 * se

    def test_zero_hazards_constant(self):
        net = lotka_volterra()
        rng = np.random.default_rng(1)
        path = gillespie_simulate(net, [4.0, 7.0], (0.0, 0.0, 0.0), 10.0, [0.0, 5.0, 10.0], rng)
        np.testing.assert_array_equal(path, [[4.0, 7.0]] * 3)

    def test_absorbing_state_held(self):
        net = lotka_volterra()
        rng = np.random.default_rng(2)
        path = gillespie_simulate(net, [0.0, 0.0], (1.0, 0.005, 0.6), 5.0, [1.0, 5.0], rng)
        np.testing.assert_array_equal(path, [[0.0, 0.0]] * 2)

    def test_lv_oscillation_sanity(self):
        net = lotka_volterra()
        persisted = 0
        for seed in range(9):
            rng = np.random.default_rng(100 + seed)
            path = gillespie_simulate(net, M.LV_X0, M.LV_TRUE_NU, 50.0, np.arange(51.0), rng)
            if path[-1].min() > 0:
                persisted += 1
        assert persisted >= 5

    def test_conservation_of_dna_total(self):
        net = autoregulatory()
        rng = np.random.default_rng(3)
        path = gillespie_simulate(net, M.AR_X0, M.AR_TRUE_NU, 20.0, np.linspace(0, 20, 81), rng)
        assert np.all(path[:, 0] >= 0)
        assert np.all(path[:, 0] <= M.AR_K)


class TestCorruptObservations:
    def test_zero_noise_identity(self):
        rng = np.random.default_rng(4)
        x = rng.random((10, 2))
        np.testing.assert_array_equal(corrupt_observations(x, [0.0, 0.0], rng), x)

    def test_noise_variance(self):
        rng = np.random.default_rng(5)
        x = np.zeros((10000, 2))
        y = corrupt_observations(x, [4.0, 0.25], rng)
        assert abs(y[:, 0].var() - 4.0) < 0.2
        assert abs(y[:, 1].var() - 0.25) < 0.0125

    def test_benchmark_noise_levels(self):
        np.testing.assert_array_equal(M.LV_SIGMA, [8.0, 8.0])
        np.testing.assert_array_equal(M.AR_SIGMA, [0.5, 0.5, 1.0, 1.0])


class TestParticleFilter:
    def test_single_observation_exact(self):
        net = lotka_volterra()
        x0 = np.array([10.0, 20.0])
        D = np.array([4.0, 9.0])
        y0 = np.array([11.0, 18.5])
        ds = Dataset(np.array([0.0]), y0[None, :])
        expect = sum(
            -0.5 * math.log(2 * math.pi * D[i]) - 0.5 * (y0[i] - x0[i]) ** 2 / D[i]
            for i in range(2)
        )
        for m in (1, 7, 40):
            got = bootstrap_pf_loglik(net, ds, M.LV_TRUE_NU, D, x0, m, np.random.default_rng(6))
            assert got == pytest.approx(expect, rel=1e-12)

    def test_unbiased_against_kalman(self):
        # linear-Gaussian latent dynamics standing in for the jump process
        a, q, r = 0.9, 0.6, 0.8
        T = 6
        rng = np.random.default_rng(7)
        x = 0.0
        ys = []
        for t in range(T):
            if t > 0:
                x = a * x + q * rng.standard_normal()
            ys.append(x + r * rng.standard_normal())
        ys = np.array(ys)[:, None]
        times = np.arange(float(T))

        def propagate(particles, t0, t1, rng_):
            steps = int(round(t1 - t0))
            out = particles
            for _ in range(steps):
                out = a * out + q * rng_.standard_normal(out.shape)
            return out

        def log_obs(y, particles):
            return -0.5 * math.log(2 * math.pi * r * r) - 0.5 * ((y[0] - particles[:, 0]) ** 2) / (r * r)

        ll_exact = 0.0
        mean, var = 0.0, 0.0
        for t in range(T):
            if t > 0:
                mean = a * mean
                var = a * a * var + q * q
            s = var + r * r
            ll_exact += -0.5 * math.log(2 * math.pi * s) - 0.5 * (ys[t, 0] - mean) ** 2 / s
            gain = var / s
            mean += gain * (ys[t, 0] - mean)
            var *= 1 - gain
        reps = 3000
        ratios = np.empty(reps)
        for i in range(reps):
            ll = particle_filter_loglik(propagate, log_obs, np.zeros(1), times, ys, 30, rng)
            ratios[i] = math.exp(ll - ll_exact)
        se = ratios.std(ddof=1) / math.sqrt(reps)
        assert abs(ratios.mean() - 1.0) < 3 * se

    def test_variance_shrinks_with_more_particles(self):
        net = immigration_net()
        nu = (2.0, 0.4)
        rng = np.random.default_rng(8)
        times = np.arange(5.0)
        x0 = np.array([5.0])
        skel = gillespie_simulate(net, x0, nu, 4.0, times, rng)
        ys = corrupt_observations(skel, [1.0], rng)
        ds = Dataset(times, ys)
        lls = {m: [] for m in (10, 200)}
        for m in lls:
            for _ in range(40):
                lls[m].append(bootstrap_pf_loglik(net, ds, nu, [1.0], x0, m, rng))
        assert np.var(lls[200]) < np.var(lls[10])

    def test_systematic_resampling_supported(self):
        net = immigration_net()
        times = np.arange(3.0)
        ds = Dataset(times, np.full((3, 1), 5.0))
        ll = bootstrap_pf_loglik(net, ds, (2.0, 0.4), [1.0], [5.0], 25,
                                 np.random.default_rng(9), resampling="systematic")
        assert math.isfinite(ll)

    def test_all_zero_weights_give_neg_inf(self):
        def propagate(p, t0, t1, rng_):
            return p

        def log_obs(y, particles):
            return np.full(len(particles), -math.inf)

        ll = particle_filter_loglik(propagate, log_obs, np.zeros(1), np.arange(2.0),
                                    np.zeros((2, 1)), 10, np.random.default_rng(0))
        assert ll == -math.inf


class TestRkf45:
    def test_exponential_decay(self):
        y = rkf45_integrate(lambda t, y: -y, np.array([1.0]), 0.0, 1.0)
        assert y[0] == pytest.approx(math.exp(-1.0), rel=1e-5)

    def test_constant(self):
        y = rkf45_integrate(lambda t, y: np.zeros_like(y), np.array([3.0, -1.0]), 0.0, 7.0)
        np.testing.assert_array_equal(y, [3.0, -1.0])

    def test_linear_system_matches_matrix_exponential(self):
        rng = np.random.default_rng(10)
        A = rng.standard_normal((3, 3))
        y0 = rng.standard_normal(3)
        rtol = 1e-6
        y = rkf45_integrate(lambda t, y: A @ y, y0, 0.0, 1.0, rtol=rtol, atol=1e-10)
        expect = linalg.expm(A) @ y0
        assert np.abs(y - expect).max() < 10 * rtol * np.abs(expect).max()

    def test_order_refinement(self):
        rng = np.random.default_rng(11)
        A = rng.standard_normal((3, 3))
        y0 = rng.standard_normal(3)
        expect = linalg.expm(A) @ y0
        errors = []
        for rtol in (1e-3, 1e-5, 1e-7):
            y = rkf45_integrate(lambda t, y: A @ y, y0, 0.0, 1.0, rtol=rtol, atol=1e-12)
            errors.append(np.abs(y - expect).max())
        assert errors[0] > errors[1] > errors[2]

    def test_blowup_raises(self):
        with pytest.raises(IntegrationError):
            rkf45_integrate(lambda t, y: y * y, np.array([2.0]), 0.0, 1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            rkf45_integrate(lambda t, y: y, np.array([1.0]), 1.0, 0.0)
        with pytest.raises(ValueError):
            rkf45_integrate(lambda t, y: y, np.array([1.0]), 0.0, 1.0, rtol=0.0)


class TestLnaOdeRhs:
    def degradation_net(self):
        return ReactionNetwork(
            name="degradation",
            species=("x",),
            stoichiometry=np.array([[-1.0]]),
            hazards=lambda x, nu: np.array([nu[0] * x[0]]),
            hazard_jacobian=lambda x, nu: np.array([[nu[0]]]),
        )

    def test_degradation_hand_value(self):
        net = self.degradation_net()
        state = LnaState(z=np.array([1.0]), m=np.zeros(1), V=np.zeros((1, 1)))
        deriv = lna_ode_rhs(state, np.array([1.0]), net)
        assert deriv.z[0] == pytest.approx(-1.0)
        assert deriv.V[0, 0] == pytest.approx(1.0)

    def test_zero_hazards_zero_derivatives(self):
        net = lotka_volterra()
        state = LnaState(z=np.array([3.0, 4.0]), m=np.zeros(2), V=np.eye(2))
        deriv = lna_ode_rhs(state, np.zeros(3), net)
        np.testing.assert_array_equal(deriv.z, np.zeros(2))
        np.testing.assert_array_equal(deriv.V, np.zeros((2, 2)))

    def test_symmetry_preserved(self):
        net = autoregulatory()
        rng = np.random.default_rng(12)
        for _ in range(10):
            A = rng.standard_normal((4, 4))
            V = A @ A.T
            state = LnaState(z=rng.uniform(1.0, 9.0, 4), m=np.zeros(4), V=V)
            deriv = lna_ode_rhs(state, M.AR_TRUE_NU, net)
            np.testing.assert_allclose(deriv.V, deriv.V.T, rtol=1e-12, atol=1e-12)

    def test_jacobian_matches_finite_differences(self):
        net = autoregulatory()
        rng = np.random.default_rng(13)
        z = rng.uniform(1.0, 9.0, 4)
        nu = M.AR_TRUE_NU
        J = net.hazard_jacobian(z, nu)
        h = 1e-6
        for j in range(4):
            dz = np.zeros(4)
            dz[j] = h
            fd = (net.hazards(z + dz, nu) - net.hazards(z - dz, nu)) / (2 * h)
            np.testing.assert_allclose(J[:, j], fd, rtol=1e-6, atol=1e-6)


class TestLnaMarginalLoglik:
    def test_single_observation(self):
        net = lotka_volterra()
        x0 = np.array([10.0, 20.0])
        D = np.array([4.0, 9.0])
        y0 = np.array([9.0, 22.0])
        ds = Dataset(np.array([0.0]), y0[None, :])
        expect = sum(
            -0.5 * math.log(2 * math.pi * D[i]) - 0.5 * (y0[i] - x0[i]) ** 2 / D[i]
            for i in range(2)
        )
        assert lna_marginal_loglik(net, ds, M.LV_TRUE_NU, D, x0) == pytest.approx(expect, rel=1e-12)

    def test_zero_process_noise_static_sum(self):
        null_net = ReactionNetwork(
            name="null",
            species=("a", "b"),
            stoichiometry=np.zeros((2, 1)),
            hazards=lambda x, nu: np.zeros(1),
            hazard_jacobian=lambda x, nu: np.zeros((1, 2)),
        )
        rng = np.random.default_rng(14)
        x0 = np.array([5.0, 2.0])
        D = np.array([1.0, 2.0])
        times = np.arange(6.0)
        ys = x0 + rng.standard_normal((6, 2)) * np.sqrt(D)
        ds = Dataset(times, ys)
        expect = sum(
            -0.5 * math.log(2 * math.pi * D[i]) - 0.5 * (ys[t, i] - x0[i]) ** 2 / D[i]
            for t in range(6)
            for i in range(2)
        )
        got = lna_marginal_loglik(null_net, ds, np.zeros(1), D, x0)
        assert got == pytest.approx(expect, rel=1e-10)

    def test_birth_death_matches_scalar_kalman(self):
        # independent scalar oracle with the closed-form mean/variance flow
        net = birth_death_net()
        nu = np.array([0.3, 0.5])
        a = nu[0] - nu[1]
        s = nu[0] + nu[1]
        sigma2 = 1.5
        x0 = 30.0
        rng = np.random.default_rng(15)
        times = np.arange(8.0)
        path = x0 * np.exp(a * times)
        ys = (path + rng.standard_normal(8) * math.sqrt(sigma2))[:, None]
        ds = Dataset(times, ys)

        def flow(z0, v0, dt):
            ea = math.exp(a * dt)
            z1 = z0 * ea
            v1 = v0 * ea * ea + s * z0 * (ea * ea - ea) / a
            return z1, v1

        ll = -0.5 * math.log(2 * math.pi * sigma2) - 0.5 * (ys[0, 0] - x0) ** 2 / sigma2
        mean, var = x0, 0.0
        for t in range(7):
            mean, var = flow(mean, var, 1.0)
            stot = var + sigma2
            ll += -0.5 * math.log(2 * math.pi * stot) - 0.5 * (ys[t + 1, 0] - mean) ** 2 / stot
            gain = var / stot
            mean += gain * (ys[t + 1, 0] - mean)
            var -= gain * var
        got = lna_marginal_loglik(net, ds, nu, np.array([sigma2]), np.array([x0]), rtol=1e-10, atol=1e-12)
        assert got == pytest.approx(ll, rel=1e-6)

    def test_covariance_stays_psd_at_benchmark_settings(self):
        from damcmc.models.lna import _propagate

        net = autoregulatory()
        z = M.AR_X0.astype(float)
        V = np.zeros((4, 4))
        for t in range(10):
            z, V = _propagate(net, M.AR_TRUE_NU, z, V, float(t), float(t + 1), 1e-6, 1e-8)
            w = np.linalg.eigvalsh(V)
            assert w.min() > -1e-8 * np.trace(V)

    def test_positive_variances_required(self):
        net = lotka_volterra()
        ds = Dataset(np.array([0.0]), np.array([[1.0, 2.0]]))
        with pytest.raises(ValueError):
            lna_marginal_loglik(net, ds, M.LV_TRUE_NU, [1.0, 0.0], [1.0, 2.0])


class TestLogPrior:
    def test_inside_support(self):
        assert log_prior(np.zeros(5)) == pytest.approx(-5 * math.log(16.0))

    def test_outside_support(self):
        theta = np.zeros(4)
        theta[2] = 8.5
        assert log_prior(theta) == -math.inf

    def test_open_boundary(self):
        theta = np.zeros(3)
        theta[0] = 8.0
        assert log_prior(theta) == -math.inf


class TestDatasets:
    def test_csv_roundtrip(self, tmp_path):
        ds = simulate_dataset("lv", seed=3)
        path = tmp_path / "lv.csv"
        save_dataset(ds, path)
        back = load_dataset(path)
        np.testing.assert_array_equal(ds.times, back.times)
        np.testing.assert_array_equal(ds.observations, back.observations)

    def test_benchmark_shapes(self):
        lv = simulate_dataset("lv", seed=0)
        assert lv.times[0] == 0.0 and lv.times[-1] == 50.0 and len(lv.times) == 51
        d1 = simulate_dataset("ar-d1", seed=0)
        assert len(d1.times) == 101 and d1.times[-1] == 100.0 and d1.n_species == 4
        d2 = simulate_dataset("ar-d2", seed=0)
        assert len(d2.times) == 201 and d2.times[-1] == 1000.0

    def test_truncate(self):
        ds = simulate_dataset("ar-d1", seed=0)
        tr = ds.truncate(30)
        assert len(tr.times) == 30
        np.testing.assert_array_equal(tr.observations, ds.observations[:30])

    def test_unknown_id(self):
        with pytest.raises(ValueError):
            simulate_dataset("zz", seed=0)

    def test_lna_simulation_reproducible(self):
        net = autoregulatory()
        times = np.linspace(0.0, 10.0, 11)
        a = lna_simulate(net, M.AR_X0, M.AR_TRUE_NU, times, np.random.default_rng(42))
        b = lna_simulate(net, M.AR_X0, M.AR_TRUE_NU, times, np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)
        assert a.shape == (11, 4)


class TestTargets:
    def test_ar_target_finite_at_truth(self):
        ds = simulate_dataset("ar-d1", seed=1).truncate(15)
        target = M.make_ar_lna_target(ds)
        assert math.isfinite(target.log_density(M.ar_true_theta()))

    def test_ar_target_respects_prior(self):
        ds = simulate_dataset("ar-d1", seed=1).truncate(5)
        target = M.make_ar_lna_target(ds)
        theta = M.ar_true_theta()
        theta[0] = 9.0
        assert target.log_density(theta) == -math.inf

    def test_lv_target_estimates(self):
        ds = simulate_dataset("lv", seed=1).truncate(4)
        target = M.make_lv_psm_target(ds, m=20)
        rng = np.random.default_rng(16)
        ll = target.estimator(M.lv_true_theta(), rng)
        assert math.isfinite(ll)
        theta = M.lv_true_theta()
        theta[1] = -8.7
        assert target.estimator(theta, rng) == -math.inf
