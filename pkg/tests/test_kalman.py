"""Kalman/EKF tests.

The central correctness check is brute force: for a scalar linear model
with deterministic x_0, build the joint covariance of (x_0..x_N,
y_0..y_N) explicitly and condition on observation prefixes by block
solves; the filter must match those conditional means to 1e-10.
"""

import math

import numpy as np
import pytest

from deepfilt.errors import NumericalError, ValidationError
from deepfilt.kalman import (
    KalmanState,
    LinearCoeffs,
    ekf_filter_ensemble,
    ekf_run,
    ekf_run_map,
    kf_filter_ensemble,
    kf_init,
    kf_run,
    kf_step,
    save_filter_csv,
    sin_drift_jacobian,
    sin_drift_map,
)
from deepfilt.models import ModelSpec, simulate_path


def scalar_coeffs(f, g, h, q0, r0):
    return LinearCoeffs(F=[[f]], G=[[g]], H=[[h]], Q0=[[q0]], R0=[[r0]])


def paper_linear_coeffs(spec=None):
    spec = spec or ModelSpec.linear()
    return LinearCoeffs.from_model_spec(spec)


def conditional_means_bruteforce(f, g, q0, r0, x0, ys):
    """E[x_n | y_0..y_n] for each n, from the explicit joint Gaussian.

    x_n = f^n x0 + sum_{k<n} f^{n-1-k} g u_k with u ~ N(0, q0), so
    Cov(x_n, x_m) = g^2 q0 sum_{k < min(n,m)} f^{n-1-k} f^{m-1-k}; and
    y = x + v with v ~ N(0, r0) i.i.d.
    """
    n_steps = len(ys)
    mean_x = np.array([x0 * f ** n for n in range(n_steps)])
    cov_x = np.empty((n_steps, n_steps))
    for n in range(n_steps):
        for m in range(n_steps):
            acc = sum(f ** (n - 1 - k) * f ** (m - 1 - k)
                      for k in range(min(n, m)))
            cov_x[n, m] = g * g * q0 * acc
    cov_y = cov_x + r0 * np.eye(n_steps)
    out = []
    for n in range(n_steps):
        cyy = cov_y[: n + 1, : n + 1]
        cxy = cov_x[n, : n + 1]
        resid = np.asarray(ys[: n + 1]) - mean_x[: n + 1]
        out.append(mean_x[n] + cxy @ np.linalg.solve(cyy, resid))
    return np.array(out)


class TestKfInit:
    def test_deterministic_initial_state(self):
        state = kf_init([1.0], [[0.0]])
        assert state.x_hat[0] == 1.0
        assert state.x_bar[0] == 1.0
        assert state.R[0, 0] == 0.0

    def test_identity_case(self):
        state = kf_init(np.zeros(2), np.eye(2))
        np.testing.assert_array_equal(state.x_hat, [0.0, 0.0])
        np.testing.assert_array_equal(state.R, np.eye(2))

    def test_rejects_non_psd(self):
        with pytest.raises(ValidationError, match="positive semidefinite"):
            kf_init([0.0], [[-1.0]])

    def test_rejects_asymmetric(self):
        with pytest.raises(ValidationError, match="symmetric"):
            kf_init([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


class TestKfStep:
    def test_zero_prior_covariance_ignores_data(self):
        coeffs = scalar_coeffs(f=1.1, g=0.0, h=1.0, q0=0.0, r0=1.0)
        state = kf_init([2.0], [[0.0]])
        out = kf_step(state, coeffs, [99.0])
        assert out.x_bar[0] == 2.0
        assert out.x_hat[0] == pytest.approx(1.1 * 2.0, abs=0)

    def test_hand_evaluated_scalar_case(self):
        # F=G=H=1, Q0=0, R0=1, R_n=1: K = 0.5 and R_{n+1} = 0.5.
        coeffs = scalar_coeffs(1.0, 1.0, 1.0, 0.0, 1.0)
        state = KalmanState(x_hat=[0.0], R=[[1.0]], x_bar=[0.0])
        y = 2.0
        out = kf_step(state, coeffs, [y])
        assert out.x_hat[0] == pytest.approx(0.5 * y, abs=1e-15)
        assert out.x_bar[0] == pytest.approx(0.5 * y, abs=1e-15)
        assert out.R[0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_riccati_reaches_algebraic_fixed_point(self):
        # r solves r^2 + (R0 - F^2 R0 - q) r - q R0 = 0 (positive root).
        spec = ModelSpec.linear()
        coeffs = paper_linear_coeffs(spec)
        f = coeffs.F[0, 0]
        q = coeffs.G[0, 0] ** 2
        r0 = coeffs.R0[0, 0]
        b = r0 - f * f * r0 - q
        r_inf = (-b + math.sqrt(b * b + 4.0 * q * r0)) / 2.0
        state = kf_init([1.0], [[0.0]])
        for _ in range(1000):
            state = kf_step(state, coeffs, [0.0])
        assert abs(state.R[0, 0] - r_inf) < 1e-10

    def test_singular_innovation_covariance_raises(self):
        coeffs = scalar_coeffs(1.0, 1.0, 0.0, 1.0, 0.0)   # H=0, R0=0
        state = KalmanState(x_hat=[0.0], R=[[1.0]], x_bar=[0.0])
        with pytest.raises(NumericalError) as err:
            kf_step(state, coeffs, [1.0])
        assert err.value.payload is not None


class TestKfRunOracle:
    def test_zero_observations_zero_noise_model(self):
        coeffs = scalar_coeffs(0.9, 1.0, 1.0, 0.0, 1.0)
        states = kf_run(coeffs, np.zeros(10), kf_init([0.0], [[0.0]]))
        assert len(states) == 10
        assert all(s.x_bar[0] == 0.0 for s in states)

    def test_matches_bruteforce_gaussian_conditioning(self):
        # Acceptance criterion: N=10 scalar linear model to 1e-10.
        spec = ModelSpec.linear(horizon_T=0.05)   # N = 10
        path = simulate_path(spec, seed=99)
        coeffs = paper_linear_coeffs(spec)
        states = kf_run(coeffs, path.observations, kf_init([spec.x0], [[0.0]]))
        xbar = np.array([s.x_bar[0] for s in states])
        oracle = conditional_means_bruteforce(
            f=coeffs.F[0, 0], g=coeffs.G[0, 0], q0=1.0,
            r0=coeffs.R0[0, 0], x0=spec.x0, ys=path.observations,
        )
        np.testing.assert_allclose(xbar, oracle, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("n_steps", [2, 5, 12])
    def test_bruteforce_agreement_other_lengths(self, n_steps):
        rng = np.random.default_rng(n_steps)
        ys = rng.normal(size=n_steps)
        coeffs = scalar_coeffs(f=0.95, g=0.4, h=1.0, q0=1.0, r0=0.3)
        states = kf_run(coeffs, ys, kf_init([0.5], [[0.0]]))
        xbar = np.array([s.x_bar[0] for s in states])
        oracle = conditional_means_bruteforce(0.95, 0.4, 1.0, 0.3, 0.5, ys)
        np.testing.assert_allclose(xbar, oracle, rtol=0, atol=1e-10)

    def test_output_length_matches_input(self):
        coeffs = paper_linear_coeffs()
        path = simulate_path(ModelSpec.linear(horizon_T=0.1), seed=1)
        states = kf_run(coeffs, path.observations, kf_init([1.0], [[0.0]]))
        assert len(states) == len(path.observations)

    def test_rejects_empty_observations(self):
        with pytest.raises(ValidationError, match="nonempty"):
            kf_run(paper_linear_coeffs(), np.zeros((0,)), kf_init([0.0], [[1.0]]))


class TestPsdInvariant:
    def test_covariance_stays_psd_scalar_and_2x2(self):
        rng = np.random.default_rng(0)
        for trial in range(1000):
            dim = 1 if trial % 2 == 0 else 2
            A = rng.normal(size=(dim, dim))
            R_init = A @ A.T
            F = rng.normal(size=(dim, dim)) * 0.9
            G = rng.normal(size=(dim, dim))
            H = rng.normal(size=(dim, dim))
            Q0 = np.eye(dim) * rng.uniform(0.0, 0.5)
            R0 = np.eye(dim) * rng.uniform(0.1, 1.0)
            coeffs = LinearCoeffs(F=F, G=G, H=H, Q0=Q0, R0=R0)
            state = kf_init(np.zeros(dim), R_init)
            for _ in range(5):
                state = kf_step(state, coeffs, rng.normal(size=dim))
                np.testing.assert_allclose(state.R, state.R.T, atol=0)
                assert np.linalg.eigvalsh(state.R).min() >= -1e-12

    def test_innovation_whiteness(self):
        # Normalized innovations of a long run are serially uncorrelated.
        spec = ModelSpec.linear(horizon_T=50.0)   # N = 10^4
        path = simulate_path(spec, seed=5)
        coeffs = paper_linear_coeffs(spec)
        xbar, xhat = kf_filter_ensemble(coeffs, path.observations[None, :],
                                        kf_init([spec.x0], [[0.0]]))
        # Reconstruct the innovation scale from the Riccati recursion.
        r0 = coeffs.R0[0, 0]
        f = coeffs.F[0, 0]
        q = coeffs.G[0, 0] ** 2
        R = 0.0
        scales = []
        for _ in range(len(path.observations)):
            scales.append(math.sqrt(R + r0))
            g = R / (R + r0) if R + r0 > 0 else 0.0
            R = f * f * (R - g * R) + q
        z = (path.observations - xhat[0]) / np.asarray(scales)
        z = z[100:]          # discard the transient
        rho = np.corrcoef(z[:-1], z[1:])[0, 1]
        assert abs(rho) < 0.05


class TestEkf:
    def test_jacobian_at_zero(self):
        assert sin_drift_jacobian(0.0, 0.005) == pytest.approx(1.025, abs=1e-15)

    def test_map_at_zero_is_identity(self):
        assert sin_drift_map(0.0, 0.005) == 0.0

    def test_noiseless_exact_init_tracks_orbit(self):
        spec = ModelSpec.sin_drift(sigma=0.0, sigma0=0.0)
        path = simulate_path(spec, seed=4)
        states = ekf_run(spec, path.observations, kf_init([spec.x0], [[0.0]]))
        xbar = np.array([s.x_bar[0] for s in states])
        np.testing.assert_array_equal(xbar, path.states)

    def test_requires_sin_model(self):
        with pytest.raises(ValidationError, match="SinDrift"):
            ekf_run(ModelSpec.linear(), np.zeros(5), kf_init([0.0], [[0.0]]))

    def test_linear_drift_ekf_equals_kf(self):
        # With the sin term replaced by the matched linear drift, the EKF
        # recursion is exactly the scalar Kalman filter.
        spec = ModelSpec.linear()
        path = simulate_path(spec, seed=8)
        coeffs = paper_linear_coeffs(spec)
        f = coeffs.F[0, 0]
        kf_states = kf_run(coeffs, path.observations, kf_init([spec.x0], [[0.0]]))
        ekf_states = ekf_run_map(
            drift=lambda x: f * x,
            drift_jacobian=lambda x: f,
            noise_var=coeffs.G[0, 0] ** 2,
            obs_var=coeffs.R0[0, 0],
            observations=path.observations,
            init=kf_init([spec.x0], [[0.0]]),
        )
        for ks, es in zip(kf_states, ekf_states):
            assert abs(ks.x_bar[0] - es.x_bar[0]) < 1e-12
            assert abs(ks.x_hat[0] - es.x_hat[0]) < 1e-12


class TestEnsembleFastPaths:
    def test_kf_ensemble_matches_per_path_run(self):
        spec = ModelSpec.linear(horizon_T=0.5)
        coeffs = paper_linear_coeffs(spec)
        init = kf_init([spec.x0], [[0.0]])
        paths = [simulate_path(spec, seed=s) for s in (1, 2, 3)]
        obs = np.stack([p.observations for p in paths])
        xbar, xhat = kf_filter_ensemble(coeffs, obs, init)
        for i, p in enumerate(paths):
            states = kf_run(coeffs, p.observations, init)
            np.testing.assert_array_equal(
                xbar[i], [s.x_bar[0] for s in states]
            )
            np.testing.assert_array_equal(
                xhat[i, 1:], [s.x_hat[0] for s in states][:-1]
            )
            assert xhat[i, 0] == init.x_hat[0]

    def test_ekf_ensemble_matches_per_path_run(self):
        spec = ModelSpec.sin_drift(horizon_T=0.5)
        init = kf_init([spec.x0], [[0.0]])
        paths = [simulate_path(spec, seed=s) for s in (4, 5)]
        obs = np.stack([p.observations for p in paths])
        xbar, xhat = ekf_filter_ensemble(spec, obs, init)
        for i, p in enumerate(paths):
            states = ekf_run(spec, p.observations, init)
            np.testing.assert_array_equal(
                xbar[i], [s.x_bar[0] for s in states]
            )


class TestFilterCsv:
    def test_columns_and_gain_values(self, tmp_path):
        spec = ModelSpec.linear(horizon_T=0.05)
        path = simulate_path(spec, seed=6)
        coeffs = paper_linear_coeffs(spec)
        init = kf_init([spec.x0], [[0.0]])
        states = kf_run(coeffs, path.observations, init)
        f = tmp_path / "filter.csv"
        save_filter_csv(f, init, states, coeffs)
        lines = f.read_text().splitlines()
        assert lines[0] == "n,x_hat,x_bar,R,K"
        assert len(lines) == len(states) + 1
        first = lines[1].split(",")
        assert float(first[1]) == 1.0      # x_hat_0 = x0
        assert float(first[3]) == 0.0      # R_0 = 0
        assert float(first[4]) == 0.0      # zero gain with zero covariance
