"""State-space models and seeded Monte Carlo path generation.

Three scalar model families are supported:

* ``LINEAR_DRIFT``:   x_{n+1} = (1 + 0.1 eta) x_n + sqrt(eta) sigma u_n
* ``SIN_DRIFT``:      x_{n+1} = x_n + eta sin(5 x_n) + sqrt(eta) sigma u_n
* ``SWITCHING_SIN``:  x_n = sin(n eta alpha_n + sigma u_n), alpha a two-state
  continuous-time Markov chain sampled on the step grid

all observed through y_n = x_n + sigma0 v_n with u_n, v_n independent
standard Gaussians. Every path is a pure function of (spec, seed): the
system noise, the observation noise, and the regime process draw from
separate, independently seeded streams, so ensembles are prefix-stable
and safe to generate in parallel.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

# Sub-stream identifiers: one independent generator per noise source.
STREAM_SYSTEM = 0
STREAM_OBSERVATION = 1
STREAM_REGIME = 2


class ModelKind(enum.Enum):
    LINEAR_DRIFT = "LinearDrift"
    SIN_DRIFT = "SinDrift"
    SWITCHING_SIN = "SwitchingSin"


@dataclass(frozen=True)
class RngStream:
    """One reproducible noise stream, identified by (seed, stream_id).

    Distinct stream_ids hash to statistically independent generators via
    numpy's SeedSequence, which is a splittable counter-based scheme.
    """

    seed: int
    stream_id: int

    def __post_init__(self):
        if self.seed < 0:
            raise ValidationError("RngStream.seed must be nonnegative")
        if self.stream_id < 0:
            raise ValidationError("RngStream.stream_id must be nonnegative")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence((self.seed, self.stream_id))
        )


def derive_path_seed(base_seed: int, index: int) -> int:
    """Deterministic per-path seed; independent of how many paths follow.

    Values stay below 2**63 so they store losslessly as int64.
    """
    if base_seed < 0:
        raise ValidationError("base_seed must be nonnegative")
    if index < 0:
        raise ValidationError("path index must be nonnegative")
    words = np.random.SeedSequence((base_seed, index)).generate_state(2, np.uint32)
    return (int(words[0]) << 32 | int(words[1])) & (2 ** 63 - 1)


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of one state-space model.

    ``generator_Q`` (a 2x2 rate matrix, rows summing to zero) is required
    for SWITCHING_SIN and must be absent otherwise. ``n_steps_N`` defaults
    to round(horizon_T / step_eta) and is validated against it.
    """

    kind: ModelKind
    horizon_T: float = 5.0
    step_eta: float = 0.005
    sigma: float = 0.7
    sigma0: float = 0.5
    x0: float = 1.0
    generator_Q: Optional[tuple[tuple[float, float], tuple[float, float]]] = None
    n_steps_N: int = field(default=-1)

    def __post_init__(self):
        if not isinstance(self.kind, ModelKind):
            raise ValidationError(f"kind must be a ModelKind, got {self.kind!r}")
        if self.step_eta <= 0:
            raise ValidationError("step_eta must be > 0")
        if self.horizon_T <= 0:
            raise ValidationError("horizon_T must be > 0")
        expected_n = int(round(self.horizon_T / self.step_eta))
        if self.n_steps_N == -1:
            object.__setattr__(self, "n_steps_N", expected_n)
        elif self.n_steps_N != expected_n:
            raise ValidationError(
                f"n_steps_N={self.n_steps_N} but round(horizon_T/step_eta)={expected_n}"
            )
        if self.sigma < 0:
            raise ValidationError("sigma must be >= 0")
        if self.sigma0 < 0:
            raise ValidationError("sigma0 must be >= 0")
        if self.kind is ModelKind.SWITCHING_SIN:
            if self.generator_Q is None:
                raise ValidationError("SwitchingSin requires generator_Q")
            _validate_generator(self.q_matrix())
        elif self.generator_Q is not None:
            raise ValidationError(f"generator_Q is only valid for SwitchingSin")

    def q_matrix(self) -> np.ndarray:
        return np.asarray(self.generator_Q, dtype=float)

    # Paper-default constructors for the three experiment families.
    @classmethod
    def linear(cls, sigma: float = 0.7, sigma0: float = 0.5, **kw) -> "ModelSpec":
        return cls(ModelKind.LINEAR_DRIFT, sigma=sigma, sigma0=sigma0, **kw)

    @classmethod
    def sin_drift(cls, sigma: float = 0.7, sigma0: float = 0.5, **kw) -> "ModelSpec":
        return cls(ModelKind.SIN_DRIFT, sigma=sigma, sigma0=sigma0, **kw)

    @classmethod
    def switching(cls, sigma: float = 0.1, sigma0: float = 0.3, **kw) -> "ModelSpec":
        kw.setdefault("generator_Q", ((-2.0, 2.0), (2.0, -2.0)))
        return cls(ModelKind.SWITCHING_SIN, sigma=sigma, sigma0=sigma0, **kw)


def _validate_generator(q: np.ndarray) -> None:
    if q.shape != (2, 2):
        raise ValidationError(f"generator_Q must be 2x2, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValidationError("generator_Q entries must be finite")
    if q[0, 1] < 0 or q[1, 0] < 0:
        raise ValidationError("generator_Q off-diagonal rates must be nonnegative")
    if np.abs(q.sum(axis=1)).max() > 1e-12:
        raise ValidationError("generator_Q rows must sum to zero")


@dataclass(frozen=True)
class Path:
    """One simulated trajectory of states, observations, and (optionally)
    regimes, all of identical length n_steps_N + 1."""

    states: np.ndarray
    observations: np.ndarray
    seed: int
    regimes: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.states) != len(self.observations):
            raise ValidationError("states and observations differ in length")
        if self.regimes is not None and len(self.regimes) != len(self.states):
            raise ValidationError("regimes differs in length from states")
        for arr in (self.states, self.observations, self.regimes):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1


def simulate_ctmc(Q, horizon_T: float, step_eta: float, seed: int) -> np.ndarray:
    """Sample a two-state CTMC with generator Q on the grid n = 0..N.

    Holding times are exact exponentials with rate |Q_ii|; jumps always go
    to the other state. The initial state is uniform on {1, 2} (the
    stationary law of the symmetric generator used in the experiments).
    A zero row means the state is absorbing. Returns an int array of
    alpha_n = alpha(n * step_eta), values in {1, 2}, right-continuous at
    jump instants.
    """
    q = np.asarray(Q, dtype=float)
    _validate_generator(q)
    if horizon_T <= 0 or step_eta <= 0:
        raise ValidationError("horizon_T and step_eta must be > 0")
    n_grid = int(round(horizon_T / step_eta)) + 1
    rng = RngStream(seed, STREAM_REGIME).generator()
    alpha = np.empty(n_grid, dtype=np.int64)
    state = int(rng.integers(1, 3))
    t = 0.0
    filled = 0
    while filled < n_grid:
        rate = -q[state - 1, state - 1]
        if rate <= 0.0:
            alpha[filled:] = state
            break
        t_jump = t + rng.exponential(1.0 / rate)
        stop = min(n_grid, int(math.ceil(t_jump / step_eta)))
        alpha[filled:stop] = state
        filled = max(filled, stop)
        state = 3 - state
        t = t_jump
    return alpha


def simulate_path(spec: ModelSpec, seed: int) -> Path:
    """Generate one path of ``spec``; a pure function of (spec, seed)."""
    n = spec.n_steps_N
    eta = spec.step_eta
    sys_rng = RngStream(seed, STREAM_SYSTEM).generator()
    obs_rng = RngStream(seed, STREAM_OBSERVATION).generator()

    if spec.kind is ModelKind.SWITCHING_SIN:
        alpha = simulate_ctmc(spec.q_matrix(), spec.horizon_T, eta, seed)
        u = sys_rng.standard_normal(n + 1)
        grid = np.arange(n + 1) * eta
        states = np.sin(grid * alpha + spec.sigma * u)
    else:
        alpha = None
        u = sys_rng.standard_normal(n)
        states = np.empty(n + 1)
        x = spec.x0
        states[0] = x
        c = math.sqrt(eta) * spec.sigma
        if spec.kind is ModelKind.LINEAR_DRIFT:
            a = 1.0 + 0.1 * eta
            for k in range(n):
                x = a * x + c * u[k]
                states[k + 1] = x
        else:
            for k in range(n):
                x = x + eta * math.sin(5.0 * x) + c * u[k]
                states[k + 1] = x

    v = obs_rng.standard_normal(n + 1)
    observations = states + spec.sigma0 * v
    return Path(states=states, observations=observations, seed=seed, regimes=alpha)


def generate_ensemble(spec: ModelSpec, n_paths: int, base_seed: int) -> list[Path]:
    """n_paths independent paths with per-path seeds derived from base_seed.

    Path i depends only on (spec, base_seed, i), never on n_paths, so
    enlarging an ensemble keeps its prefix bit-identical.
    """
    if n_paths < 1:
        raise ValidationError("n_paths must be >= 1")
    return [
        simulate_path(spec, derive_path_seed(base_seed, i)) for i in range(n_paths)
    ]


# ---------------------------------------------------------------------------
# CSV serialization


def save_path_csv(path: Path, file) -> None:
    """Write one path as CSV with columns n, [alpha,] x, y."""
    file = FsPath(file)
    with file.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if path.regimes is not None:
            writer.writerow(["n", "alpha", "x", "y"])
            for i in range(len(path.states)):
                writer.writerow([i, int(path.regimes[i]),
                                 repr(float(path.states[i])),
                                 repr(float(path.observations[i]))])
        else:
            writer.writerow(["n", "x", "y"])
            for i in range(len(path.states)):
                writer.writerow([i, repr(float(path.states[i])),
                                 repr(float(path.observations[i]))])


def load_path_csv(file, seed: int = -1) -> Path:
    """Read a path written by :func:`save_path_csv`."""
    file = FsPath(file)
    with file.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    has_alpha = "alpha" in header
    states = np.array([float(r[-2]) for r in rows])
    obs = np.array([float(r[-1]) for r in rows])
    regimes = np.array([int(r[1]) for r in rows], dtype=np.int64) if has_alpha else None
    return Path(states=states, observations=obs, seed=seed, regimes=regimes)


def save_ensemble_csv(paths: Sequence[Path], directory, spec: ModelSpec,
                      base_seed: int) -> None:
    """Write each path to its own CSV plus a manifest recording how the
    ensemble was produced."""
    directory = FsPath(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, path in enumerate(paths):
        save_path_csv(path, directory / f"path_{i:05d}.csv")
    manifest = {
        "kind": spec.kind.value,
        "horizon_T": spec.horizon_T,
        "step_eta": spec.step_eta,
        "n_steps_N": spec.n_steps_N,
        "sigma": spec.sigma,
        "sigma0": spec.sigma0,
        "x0": spec.x0,
        "generator_Q": spec.generator_Q,
        "base_seed": base_seed,
        "n_paths": len(paths),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
