"""Kalman filter for linear-Gaussian models and a first-order extended
Kalman filter for the sin-drift model.

The filter recursion follows the standard predictor form

    x_hat_{n+1} = F x_hat_n + K_n (y_n - H' x_hat_n)
    K_n         = F R_n H (H' R_n H + R0)^{-1}
    R_{n+1}     = F [R_n - R_n H (H' R_n H + R0)^{-1} H' R_n] F' + G Q0 G'

with the filtered mean evaluated at the current step before prediction:

    x_bar_n = x_hat_n + R_n H (H' R_n H + R0)^{-1} (y_n - H' x_hat_n).

Matrices are general small dense arrays; the covariance measurement
update uses the Joseph form and symmetrizes, so R stays symmetric PSD.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Callable, Sequence, Union

import numpy as np

from .errors import NumericalError, ValidationError
from .models import ModelKind, ModelSpec


def _as_psd(name: str, m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {m.shape}")
    if not np.allclose(m, m.T, atol=1e-12):
        raise ValidationError(f"{name} must be symmetric")
    if m.size and np.linalg.eigvalsh(m).min() < -1e-12:
        raise ValidationError(f"{name} must be positive semidefinite")
    return m


@dataclass(frozen=True)
class LinearCoeffs:
    """Coefficients (F, G, H, Q0, R0) of one linear-Gaussian step.

    The scalar experiments map onto F = 1 + 0.1 eta, G = sqrt(eta) sigma,
    H = 1, Q0 = 1, R0 = sigma0**2, so that G Q0 G' equals the simulated
    system noise variance eta sigma**2.
    """

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    Q0: np.ndarray
    R0: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        Q0 = _as_psd("Q0", self.Q0)
        R0 = _as_psd("R0", self.R0)
        m1 = F.shape[0]
        if F.shape != (m1, m1):
            raise ValidationError(f"F must be square, got {F.shape}")
        if G.shape[0] != m1 or G.shape[1] != Q0.shape[0]:
            raise ValidationError(
                f"G shape {G.shape} inconsistent with F {F.shape} / Q0 {Q0.shape}"
            )
        if H.shape[0] != m1 or H.shape[1] != R0.shape[0]:
            raise ValidationError(
                f"H shape {H.shape} inconsistent with F {F.shape} / R0 {R0.shape}"
            )
        for name, arr in (("F", F), ("G", G), ("H", H), ("Q0", Q0), ("R0", R0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_model_spec(cls, spec: ModelSpec) -> "LinearCoeffs":
        if spec.kind is not ModelKind.LINEAR_DRIFT:
            raise ValidationError(
                f"exact Kalman coefficients exist only for LinearDrift, got {spec.kind.value}"
            )
        eta = spec.step_eta
        return cls(
            F=[[1.0 + 0.1 * eta]],
            G=[[math.sqrt(eta) * spec.sigma]],
            H=[[1.0]],
            Q0=[[1.0]],
            R0=[[spec.sigma0 ** 2]],
        )


@dataclass(frozen=True)
class KalmanState:
    """Filter state after one measurement: the next-step predicted mean
    x_hat and its covariance R, plus the current filtered mean x_bar."""

    x_hat: np.ndarray
    R: np.ndarray
    x_bar: np.ndarray

    def __post_init__(self):
        x_hat = np.atleast_1d(np.asarray(self.x_hat, dtype=float))
        x_bar = np.atleast_1d(np.asarray(self.x_bar, dtype=float))
        R = _as_psd("R", self.R)
        if R.shape[0] != x_hat.shape[0] or x_bar.shape[0] != x_hat.shape[0]:
            raise ValidationError("KalmanState fields have inconsistent dimensions")
        for name, arr in (("x_hat", x_hat), ("R", R), ("x_bar", x_bar)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def kf_init(x0_mean, R0_cov) -> KalmanState:
    """Initial filter state: x_hat = E x_0 and R = Cov x_0."""
    x0_mean = np.atleast_1d(np.asarray(x0_mean, dtype=float))
    return KalmanState(x_hat=x0_mean, R=_as_psd("R0_cov", R0_cov), x_bar=x0_mean)


def _gain_times(R: np.ndarray, H: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Solve M = R H S^{-1}; M = 0 when R = 0 (then the data cannot move
    the estimate, which covers exactly-deterministic filters without a
    singular solve)."""
    if not R.any():
        return np.zeros((R.shape[0], S.shape[0]))
    try:
        return np.linalg.solve(S.T, (R @ H).T).T
    except np.linalg.LinAlgError:
        raise NumericalError(
            "singular innovation covariance H'RH + R0", payload=S
        ) from None


def kf_step(state: KalmanState, coeffs: LinearCoeffs, y) -> KalmanState:
    """Advance the filter by one observation.

    Returns the state holding x_bar for the current step and
    (x_hat, R) predicted for the next one.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    F, G, H, Q0, R0 = coeffs.F, coeffs.G, coeffs.H, coeffs.Q0, coeffs.R0
    R = state.R
    S = H.T @ R @ H + R0
    M = _gain_times(R, H, S)                     # R H S^{-1}
    innovation = y - H.T @ state.x_hat
    x_bar = state.x_hat + M @ innovation
    x_hat_next = F @ state.x_hat + F @ (M @ innovation)
    # Joseph-form measurement update, then predict; keeps R symmetric PSD.
    A = np.eye(R.shape[0]) - M @ H.T
    P = A @ R @ A.T + M @ R0 @ M.T
    R_next = F @ P @ F.T + G @ Q0 @ G.T
    R_next = (R_next + R_next.T) / 2.0
    return KalmanState(x_hat=x_hat_next, R=R_next, x_bar=x_bar)


CoeffsLike = Union[LinearCoeffs, Sequence[LinearCoeffs]]


def _coeffs_at(coeffs_per_step: CoeffsLike, n: int) -> LinearCoeffs:
    if isinstance(coeffs_per_step, LinearCoeffs):
        return coeffs_per_step
    return coeffs_per_step[n]


def kf_run(coeffs_per_step: CoeffsLike, observations, init: KalmanState
           ) -> list[KalmanState]:
    """Fold kf_step over observations y_0..y_N.

    ``coeffs_per_step`` is a single LinearCoeffs (time-invariant) or one
    per step. Output n holds x_bar = E[x_n | y_0..y_n].
    """
    observations = _as_obs_matrix(observations)
    states = []
    state = init
    for n in range(observations.shape[0]):
        state = kf_step(state, _coeffs_at(coeffs_per_step, n), observations[n])
        states.append(state)
    return states


def _as_obs_matrix(observations) -> np.ndarray:
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    if obs.ndim != 2 or obs.shape[0] == 0:
        raise ValidationError("observations must be a nonempty sequence of vectors")
    return obs


# ---------------------------------------------------------------------------
# Extended Kalman filter for the sin-drift model


def sin_drift_map(x: float, eta: float) -> float:
    """One deterministic step of the sin model: f(x) = x + eta sin(5x)."""
    return float(x + eta * np.sin(5.0 * x))


def sin_drift_jacobian(x: float, eta: float) -> float:
    """f'(x) = 1 + 5 eta cos(5x)."""
    return float(1.0 + 5.0 * eta * np.cos(5.0 * x))


def ekf_run_map(drift: Callable[[float], float],
                drift_jacobian: Callable[[float], float],
                noise_var: float, obs_var: float, observations,
                init: KalmanState) -> list[KalmanState]:
    """Scalar first-order EKF for x_{n+1} = f(x_n) + w_n, y_n = x_n + v_n.

    The mean is propagated through the exact map f; the covariance through
    the Jacobian evaluated at the current filtered mean. The measurement
    update is identical to the Kalman filter (the observation map is
    linear with H = 1).
    """
    observations = _as_obs_matrix(observations)
    if observations.shape[1] != 1:
        raise ValidationError("the EKF is scalar; observations must be 1-dimensional")
    x_hat = float(init.x_hat[0])
    R = float(init.R[0, 0])
    states = []
    for n in range(observations.shape[0]):
        y = float(observations[n, 0])
        S = R + obs_var
        if R == 0.0:
            g = 0.0
        elif S <= 0.0:
            raise NumericalError("singular innovation covariance", payload=S)
        else:
            g = R / S
        innovation = y - x_hat
        x_bar = x_hat + g * innovation
        P = (1.0 - g) * R * (1.0 - g) + g * obs_var * g
        F = drift_jacobian(x_bar)
        x_hat = drift(x_bar)
        R = F * P * F + noise_var
        states.append(KalmanState(x_hat=[x_hat], R=[[R]], x_bar=[x_bar]))
    return states


def ekf_run(model: ModelSpec, observations, init: KalmanState) -> list[KalmanState]:
    """EKF baseline parameterized by a SIN_DRIFT model spec."""
    if model.kind is not ModelKind.SIN_DRIFT:
        raise ValidationError(f"ekf_run requires a SinDrift model, got {model.kind.value}")
    eta = model.step_eta
    return ekf_run_map(
        drift=lambda x: sin_drift_map(x, eta),
        drift_jacobian=lambda x: sin_drift_jacobian(x, eta),
        noise_var=eta * model.sigma ** 2,
        obs_var=model.sigma0 ** 2,
        observations=observations,
        init=init,
    )


# ---------------------------------------------------------------------------
# Vectorized application over path ensembles
#
# Per-path filtering is embarrassingly parallel; these run the identical
# scalar recursions across all paths at once (elementwise, so each path's
# arithmetic matches kf_run/ekf_run bit for bit).


def kf_filter_ensemble(coeffs: LinearCoeffs, obs_matrix: np.ndarray,
                       init: KalmanState) -> tuple[np.ndarray, np.ndarray]:
    """Scalar KF over a (n_paths, n_steps+1) observation grid.

    Returns (x_bar grid, x_hat grid) of the same shape; x_hat[:, n] is the
    predictor E[x_n | y_0..y_{n-1}].
    """
    if coeffs.F.shape != (1, 1):
        raise ValidationError("kf_filter_ensemble supports scalar models only")
    obs_matrix = np.asarray(obs_matrix, dtype=float)
    f = float(coeffs.F[0, 0])
    g0 = float(coeffs.G[0, 0])
    q = g0 * float(coeffs.Q0[0, 0]) * g0   # (G Q0) G', matching kf_step's order
    h = float(coeffs.H[0, 0])
    r0 = float(coeffs.R0[0, 0])
    n_paths, n_cols = obs_matrix.shape
    x_hat = np.full(n_paths, float(init.x_hat[0]))
    R = float(init.R[0, 0])
    xbar_grid = np.empty_like(obs_matrix)
    xhat_grid = np.empty_like(obs_matrix)
    for n in range(n_cols):
        xhat_grid[:, n] = x_hat
        S = h * R * h + r0
        if R == 0.0:
            m = 0.0
        elif S <= 0.0:
            raise NumericalError("singular innovation covariance", payload=S)
        else:
            m = R * h / S
        innovation = obs_matrix[:, n] - h * x_hat
        xbar_grid[:, n] = x_hat + m * innovation
        x_hat = f * x_hat + f * (m * innovation)
        a = 1.0 - m * h
        R = f * (a * R * a + m * r0 * m) * f + q
    return xbar_grid, xhat_grid


def ekf_filter_ensemble(model: ModelSpec, obs_matrix: np.ndarray,
                        init: KalmanState) -> tuple[np.ndarray, np.ndarray]:
    """Scalar sin-model EKF over a (n_paths, n_steps+1) observation grid."""
    if model.kind is not ModelKind.SIN_DRIFT:
        raise ValidationError(f"ekf requires a SinDrift model, got {model.kind.value}")
    obs_matrix = np.asarray(obs_matrix, dtype=float)
    eta = model.step_eta
    q = eta * model.sigma ** 2
    r0 = model.sigma0 ** 2
    n_paths, n_cols = obs_matrix.shape
    x_hat = np.full(n_paths, float(init.x_hat[0]))
    R = np.full(n_paths, float(init.R[0, 0]))
    xbar_grid = np.empty_like(obs_matrix)
    xhat_grid = np.empty_like(obs_matrix)
    for n in range(n_cols):
        xhat_grid[:, n] = x_hat
        S = R + r0
        bad = (R != 0.0) & (S <= 0.0)
        if bad.any():
            raise NumericalError("singular innovation covariance", payload=S)
        g = np.where(R == 0.0, 0.0, R / np.where(S > 0.0, S, 1.0))
        innovation = obs_matrix[:, n] - x_hat
        x_bar = x_hat + g * innovation
        xbar_grid[:, n] = x_bar
        P = (1.0 - g) * R * (1.0 - g) + g * r0 * g
        F = 1.0 + 5.0 * eta * np.cos(5.0 * x_bar)
        x_hat = x_bar + eta * np.sin(5.0 * x_bar)
        R = F * P * F + q
    return xbar_grid, xhat_grid


# ---------------------------------------------------------------------------
# CSV serialization


def save_filter_csv(file, init: KalmanState, states: Sequence[KalmanState],
                    coeffs: LinearCoeffs) -> None:
    """Write a scalar filter run as CSV with columns n, x_hat, x_bar, R, K.

    Row n carries the predictor x_hat_n, the filtered mean x_bar_n, the
    prediction covariance R_n, and the gain K_n actually applied at n.
    """
    if coeffs.F.shape != (1, 1):
        raise ValidationError("save_filter_csv supports the scalar case only")
    f = float(coeffs.F[0, 0])
    h = float(coeffs.H[0, 0])
    r0 = float(coeffs.R0[0, 0])
    file = FsPath(file)
    with file.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "x_hat", "x_bar", "R", "K"])
        prev = init
        for n, state in enumerate(states):
            R_n = float(prev.R[0, 0])
            S = h * R_n * h + r0
            K_n = 0.0 if R_n == 0.0 else f * R_n * h / S
            writer.writerow(
                [n, repr(float(prev.x_hat[0])), repr(float(state.x_bar[0])),
                 repr(R_n), repr(K_n)]
            )
            prev = state
