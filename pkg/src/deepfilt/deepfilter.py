"""Windowed supervised training of the neural filter, and its application
to observation sequences.

A sample pairs the window (y_kappa, y_{kappa-1}, ..., y_{kappa-n0+1}) —
most recent observation first — with the state x_kappa as target, for
kappa = n0..N. Windows from all training paths are pooled, shuffled once,
and consumed by single-sample SGD.

Window entries and targets are standardized (affine maps fitted on the
training pool) before they reach the network; the fitted maps ride along
in the TrainedFilter and are inverted at inference time. The raw state
scale of these models (several units wide) otherwise saturates the
sigmoid stack and SGD at gamma = 0.1 never leaves the predict-the-mean
regime.
"""

from __future__ import annotations

import math
from collections.abc import Sequence as AbcSequence
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Iterator, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import TrainingDivergedError, ValidationError
from .models import ModelKind, ModelSpec, Path
from .neural import Mlp, MlpArch, forward_batch, mlp_init, dump_mlp, parse_mlp

_LOSS_WINDOW = 10_000          # trailing steps averaged for loss reporting
_FINITE_CHECK_EVERY = 50_000   # parameter sweep cadence for NaN/Inf detection


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run (defaults are the paper setup).

    ``grad_clip`` caps the per-sample gradient L2 norm; at the default of
    10 it engages on well under 0.1% of steps and only suppresses the
    rare tail kicks that otherwise blow up fixed-rate SGD over millions
    of steps. ``average_tail`` returns the Polyak average of the final
    fraction of iterates instead of the last iterate, removing the
    endpoint jitter of constant-rate SGD; 0 disables it.
    """

    n0: int = 50
    n_seed: int = 5000
    gamma: float = 0.1
    epochs: int = 1
    shuffle_seed: int = 0
    sample_stride: int = 1
    hidden_layers: int = 5
    hidden_units: int = 5
    standardize: bool = True
    grad_clip: Optional[float] = 10.0
    average_tail: float = 0.1

    def __post_init__(self):
        if self.n0 < 1:
            raise ValidationError("n0 must be >= 1")
        if self.n_seed < 1:
            raise ValidationError("n_seed must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError("gamma must satisfy 0 < gamma < 1")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.sample_stride < 1:
            raise ValidationError("sample_stride must be >= 1")
        if self.hidden_layers < 0 or self.hidden_units < 1:
            raise ValidationError("invalid network shape in TrainConfig")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValidationError("grad_clip must be positive (or None)")
        if not 0.0 <= self.average_tail <= 1.0:
            raise ValidationError("average_tail must lie in [0, 1]")

    def arch(self) -> MlpArch:
        return MlpArch(input_dim=self.n0, hidden_layers=self.hidden_layers,
                       hidden_units=self.hidden_units, output_dim=1)


@dataclass(frozen=True)
class WindowSample:
    """One supervised sample: most-recent-first observation window and the
    state at its head. ``source`` records (path seed, kappa)."""

    input: np.ndarray
    target: float
    source: tuple[int, int]


class WindowDataset(AbcSequence):
    """Pooled window samples from an ensemble, in a fixed (shuffled) order.

    Stores the per-path observation/state grids plus (path, kappa) index
    arrays instead of materialized windows, so the full paper-scale pool
    (4.755M windows of 50) costs ~80 MB instead of ~2 GB. Indexing
    materializes one WindowSample at a time.
    """

    def __init__(self, observations: np.ndarray, states: np.ndarray,
                 path_seeds: np.ndarray, idx_path: np.ndarray,
                 idx_kappa: np.ndarray, n0: int, kappa_grid: np.ndarray):
        self.observations = observations
        self.states = states
        self.path_seeds = path_seeds
        self.idx_path = idx_path
        self.idx_kappa = idx_kappa
        self.n0 = n0
        self.kappa_grid = kappa_grid   # the per-path kappa set, pre-shuffle

    def __len__(self) -> int:
        return len(self.idx_path)

    def __getitem__(self, i) -> "WindowSample":
        if isinstance(i, slice):
            raise TypeError("WindowDataset does not support slicing")
        if i < 0:
            i += len(self)
        p = int(self.idx_path[i])
        kappa = int(self.idx_kappa[i])
        window = self.observations[p, kappa - self.n0 + 1:kappa + 1][::-1].copy()
        return WindowSample(
            input=window,
            target=float(self.states[p, kappa]),
            source=(int(self.path_seeds[p]), kappa),
        )


def extract_windows(path: Path, n0: int) -> list[WindowSample]:
    """All window samples of one path: kappa = n0..N, N - n0 + 1 in total."""
    if n0 < 1:
        raise ValidationError("n0 must be >= 1")
    n_grid = len(path.observations)
    if n_grid < n0 + 1:
        raise ValidationError(
            f"path has {n_grid} points but windows of size {n0} need at least {n0 + 1}"
        )
    samples = []
    for kappa in range(n0, n_grid):
        window = path.observations[kappa - n0 + 1:kappa + 1][::-1].copy()
        samples.append(WindowSample(input=window,
                                    target=float(path.states[kappa]),
                                    source=(path.seed, kappa)))
    return samples


def build_dataset(ensemble: Sequence[Path], cfg: TrainConfig) -> WindowDataset:
    """Pool windows from every path (kappa = n0, n0+stride, ...), then apply
    one deterministic shuffle driven by cfg.shuffle_seed."""
    if len(ensemble) == 0:
        raise ValidationError("ensemble must contain at least one path")
    n_grid = len(ensemble[0].observations)
    if n_grid < cfg.n0 + 1:
        raise ValidationError(
            f"paths have {n_grid} points but windows of size {cfg.n0} "
            f"need at least {cfg.n0 + 1}"
        )
    for p in ensemble:
        if len(p.observations) != n_grid:
            raise ValidationError("ensemble paths must share one length")
    observations = np.stack([p.observations for p in ensemble])
    states = np.stack([p.states for p in ensemble])
    path_seeds = np.array([p.seed for p in ensemble], dtype=np.int64)
    kappas = np.arange(cfg.n0, n_grid, cfg.sample_stride, dtype=np.int64)
    n_paths = len(ensemble)
    idx_path = np.repeat(np.arange(n_paths, dtype=np.int64), len(kappas))
    idx_kappa = np.tile(kappas, n_paths)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.shuffle_seed,)))
    order = rng.permutation(len(idx_path))
    return WindowDataset(observations, states, path_seeds,
                         idx_path[order], idx_kappa[order], cfg.n0, kappas)


@dataclass(frozen=True)
class TrainProvenance:
    """What produced a TrainedFilter: config, seeds, and the loss level
    reached (trailing-window averages, in raw state units)."""

    config: TrainConfig
    init_seed: int
    final_loss: float
    epoch_losses: tuple[float, ...]
    n_samples: int
    nominal: Optional[ModelSpec] = None


@dataclass(frozen=True)
class TrainedFilter:
    """A trained network plus the affine input/target maps fitted with it."""

    net: Mlp
    n0: int
    input_center: float
    input_scale: float
    target_center: float
    target_scale: float
    provenance: Optional[TrainProvenance] = None

    def __post_init__(self):
        if self.net.arch.input_dim != self.n0:
            raise ValidationError(
                f"network input_dim {self.net.arch.input_dim} != window size {self.n0}"
            )
        if self.input_scale <= 0 or self.target_scale <= 0:
            raise ValidationError("affine scales must be positive")


@dataclass(frozen=True)
class DeepFilterOutput(AbcSequence):
    """Estimates x_tilde_n for n = n0..N; iterates as (n, x_tilde) pairs."""

    steps: np.ndarray
    estimates: np.ndarray

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, i) -> tuple[int, float]:
        return int(self.steps[i]), float(self.estimates[i])

    def __iter__(self) -> Iterator[tuple[int, float]]:
        for n, v in zip(self.steps, self.estimates):
            yield int(n), float(v)


def _dataset_arrays(dataset):
    """Split a dataset into (WindowDataset | None, inputs, targets, n0);
    plain WindowSample sequences are materialized into dense arrays."""
    if isinstance(dataset, WindowDataset):
        return dataset, None, None, dataset.n0
    samples = list(dataset)
    if not samples:
        raise ValidationError("dataset must be nonempty")
    n0 = len(samples[0].input)
    inputs = np.stack([s.input for s in samples]).astype(float)
    targets = np.array([s.target for s in samples], dtype=float)
    return None, inputs, targets, n0


def _pool_stats(dataset: WindowDataset) -> tuple[float, float, float, float]:
    """Mean/std of every window entry and of every target in the pool.

    Entries are weighted by how often they appear in windows, computed
    from strided views so nothing is materialized. Every path carries the
    same kappa grid by construction.
    """
    n0 = dataset.n0
    kappas = dataset.kappa_grid
    total = 0.0
    total_sq = 0.0
    count = 0
    t_total = 0.0
    t_total_sq = 0.0
    for p in range(dataset.observations.shape[0]):
        rows = sliding_window_view(dataset.observations[p], n0)[kappas - n0 + 1]
        total += float(rows.sum())
        total_sq += float((rows * rows).sum())
        count += rows.size
        targets = dataset.states[p, kappas]
        t_total += float(targets.sum())
        t_total_sq += float((targets * targets).sum())
    n_t = len(dataset)
    in_mean = total / count
    in_var = max(total_sq / count - in_mean ** 2, 0.0)
    t_mean = t_total / n_t
    t_var = max(t_total_sq / n_t - t_mean ** 2, 0.0)
    return in_mean, math.sqrt(in_var), t_mean, math.sqrt(t_var)


def train(dataset, cfg: TrainConfig, init_seed: int,
          nominal: Optional[ModelSpec] = None,
          arch: Optional[MlpArch] = None) -> TrainedFilter:
    """Single-sample SGD over the pooled windows.

    Iterates the dataset in its given order for the first epoch and in a
    deterministic reshuffle (derived from cfg.shuffle_seed and the epoch
    index) for later ones. Deterministic in (dataset order, cfg,
    init_seed). Raises TrainingDivergedError, naming the global step, if
    a non-finite loss or parameter shows up.
    """
    win_ds, inputs, targets, n0 = _dataset_arrays(dataset)
    if arch is None:
        arch = MlpArch(input_dim=n0, hidden_layers=cfg.hidden_layers,
                       hidden_units=cfg.hidden_units, output_dim=1)
    if arch.input_dim != n0:
        raise ValidationError(
            f"arch.input_dim {arch.input_dim} != dataset window size {n0}"
        )

    if cfg.standardize:
        if win_ds is not None:
            in_c, in_s, t_c, t_s = _pool_stats(win_ds)
        else:
            in_c, in_s = float(inputs.mean()), float(inputs.std())
            t_c, t_s = float(targets.mean()), float(targets.std())
        in_s = in_s if in_s > 0 else 1.0
        t_s = t_s if t_s > 0 else 1.0
    else:
        in_c, in_s, t_c, t_s = 0.0, 1.0, 0.0, 1.0

    net = mlp_init(arch, init_seed)
    weights, biases = net.weights, net.biases
    n_layers = len(weights)
    gamma = cfg.gamma
    clip = cfg.grad_clip
    n_samples = len(dataset)
    raw_scale = t_s * t_s

    total_steps = cfg.epochs * n_samples
    tail_from = total_steps - int(cfg.average_tail * total_steps)
    avg_weights = [np.zeros_like(w) for w in weights]
    avg_biases = [np.zeros_like(b) for b in biases]
    avg_count = 0

    loss_buf = np.zeros(min(_LOSS_WINDOW, n_samples))
    buf_n = len(loss_buf)
    epoch_losses = []
    step = 0
    for epoch in range(cfg.epochs):
        if epoch == 0:
            order = None
        else:
            rng = np.random.default_rng(
                np.random.SeedSequence((cfg.shuffle_seed, epoch))
            )
            order = rng.permutation(n_samples)
        for i in range(n_samples):
            j = i if order is None else order[i]
            if win_ds is not None:
                p = win_ds.idx_path[j]
                kappa = win_ds.idx_kappa[j]
                window = win_ds.observations[p, kappa - n0 + 1:kappa + 1][::-1]
                target = win_ds.states[p, kappa]
            else:
                window = inputs[j]
                target = targets[j]
            a = (window - in_c) / in_s
            activations = [a]
            for l in range(n_layers - 1):
                a = expit(weights[l] @ a + biases[l])
                activations.append(a)
            out = weights[-1] @ a + biases[-1]
            delta = out - (target - t_c) / t_s
            err = float(delta[0])
            if not math.isfinite(err):
                raise TrainingDivergedError(
                    f"non-finite training loss at step {step}", step_index=step
                )
            loss_buf[step % buf_n] = 0.5 * err * err * raw_scale
            # Reverse accumulation; one unclipped iteration equals
            # sgd_step(net, backward(...), gamma) applied in place.
            g_weights = [None] * n_layers
            g_biases = [None] * n_layers
            sq_norm = 0.0
            for l in range(n_layers - 1, -1, -1):
                a_in = activations[l]
                g_b = delta
                g_w = np.outer(delta, a_in)
                if clip is not None:
                    sq_norm += float((g_w * g_w).sum()) + float(g_b @ g_b)
                if l > 0:
                    delta = (weights[l].T @ delta) * a_in * (1.0 - a_in)
                g_weights[l] = g_w
                g_biases[l] = g_b
            scale = gamma
            if clip is not None and sq_norm > clip * clip:
                scale = gamma * clip / math.sqrt(sq_norm)
            for l in range(n_layers):
                weights[l] -= scale * g_weights[l]
                biases[l] -= scale * g_biases[l]
            step += 1
            if step > tail_from:
                for l in range(n_layers):
                    avg_weights[l] += weights[l]
                    avg_biases[l] += biases[l]
                avg_count += 1
            if step % _FINITE_CHECK_EVERY == 0 and not net.all_finite():
                raise TrainingDivergedError(
                    f"non-finite network parameter at step {step}", step_index=step
                )
        epoch_losses.append(float(loss_buf[:min(step, buf_n)].mean()))

    if not net.all_finite():
        raise TrainingDivergedError(
            f"non-finite network parameter at step {step}", step_index=step
        )
    if avg_count > 0:
        net = Mlp(arch,
                  [w / avg_count for w in avg_weights],
                  [b / avg_count for b in avg_biases])
    provenance = TrainProvenance(
        config=cfg,
        init_seed=init_seed,
        final_loss=epoch_losses[-1],
        epoch_losses=tuple(epoch_losses),
        n_samples=n_samples,
        nominal=nominal,
    )
    return TrainedFilter(net=net, n0=n0, input_center=in_c, input_scale=in_s,
                         target_center=t_c, target_scale=t_s,
                         provenance=provenance)


def infer_path(filter: TrainedFilter, observations) -> DeepFilterOutput:
    """Run the trained network over every window of one observation
    sequence: x_tilde_kappa for kappa = n0..N. Stateless across steps."""
    obs = np.asarray(observations, dtype=float)
    if obs.ndim != 1:
        raise ValidationError("observations must be a 1-D sequence")
    n0 = filter.n0
    if len(obs) < n0 + 1:
        raise ValidationError(
            f"need at least {n0 + 1} observations for window size {n0}, got {len(obs)}"
        )
    windows = sliding_window_view(obs, n0)[1:, ::-1]
    z = (windows - filter.input_center) / filter.input_scale
    out = forward_batch(filter.net, z)[:, 0]
    estimates = out * filter.target_scale + filter.target_center
    steps = np.arange(n0, len(obs))
    return DeepFilterOutput(steps=steps, estimates=estimates)


def infer_ensemble(filter: TrainedFilter, obs_matrix: np.ndarray) -> np.ndarray:
    """infer_path over a (n_paths, n_steps+1) grid; returns the estimate
    grid of shape (n_paths, n_steps+1-n0)."""
    obs_matrix = np.asarray(obs_matrix, dtype=float)
    return np.stack([infer_path(filter, row).estimates for row in obs_matrix])


# ---------------------------------------------------------------------------
# Persistence: flat key = value provenance header, then the network in the
# neural module's text format.


def save_filter(tf: TrainedFilter, file) -> None:
    lines = ["deep-filter v1"]
    lines.append(f"n0 = {tf.n0}")
    for name in ("input_center", "input_scale", "target_center", "target_scale"):
        lines.append("%s = %.17g" % (name, getattr(tf, name)))
    prov = tf.provenance
    if prov is not None:
        lines.append(f"init_seed = {prov.init_seed}")
        lines.append("final_loss = %.17g" % prov.final_loss)
        lines.append(f"n_samples = {prov.n_samples}")
        cfg = prov.config
        lines.append(f"cfg.n_seed = {cfg.n_seed}")
        lines.append("cfg.gamma = %.17g" % cfg.gamma)
        lines.append(f"cfg.epochs = {cfg.epochs}")
        lines.append(f"cfg.shuffle_seed = {cfg.shuffle_seed}")
        lines.append(f"cfg.sample_stride = {cfg.sample_stride}")
        lines.append(f"cfg.hidden_layers = {cfg.hidden_layers}")
        lines.append(f"cfg.hidden_units = {cfg.hidden_units}")
        lines.append(f"cfg.standardize = {cfg.standardize}")
        lines.append("cfg.grad_clip = %s"
                     % ("none" if cfg.grad_clip is None else "%.17g" % cfg.grad_clip))
        lines.append("cfg.average_tail = %.17g" % cfg.average_tail)
        if prov.nominal is not None:
            spec = prov.nominal
            lines.append(f"nominal.kind = {spec.kind.value}")
            lines.append("nominal.horizon_T = %.17g" % spec.horizon_T)
            lines.append("nominal.step_eta = %.17g" % spec.step_eta)
            lines.append("nominal.sigma = %.17g" % spec.sigma)
            lines.append("nominal.sigma0 = %.17g" % spec.sigma0)
            lines.append("nominal.x0 = %.17g" % spec.x0)
            if spec.generator_Q is not None:
                flat_q = " ".join("%.17g" % v for row in spec.generator_Q for v in row)
                lines.append(f"nominal.generator_Q = {flat_q}")
    FsPath(file).write_text("\n".join(lines) + "\n" + dump_mlp(tf.net))


def load_filter(file) -> TrainedFilter:
    text = FsPath(file).read_text()
    lines = text.splitlines()
    if not lines or lines[0] != "deep-filter v1":
        raise ValidationError("not a serialized deep filter")
    fields: dict[str, str] = {}
    mlp_start = None
    for i, line in enumerate(lines[1:], start=1):
        if line.startswith("mlp "):
            mlp_start = i
            break
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    if mlp_start is None:
        raise ValidationError("serialized deep filter is missing its network")
    net = parse_mlp("\n".join(lines[mlp_start:]) + "\n")

    nominal = None
    if "nominal.kind" in fields:
        q = None
        if "nominal.generator_Q" in fields:
            vals = [float(v) for v in fields["nominal.generator_Q"].split()]
            q = ((vals[0], vals[1]), (vals[2], vals[3]))
        nominal = ModelSpec(
            kind=ModelKind(fields["nominal.kind"]),
            horizon_T=float(fields["nominal.horizon_T"]),
            step_eta=float(fields["nominal.step_eta"]),
            sigma=float(fields["nominal.sigma"]),
            sigma0=float(fields["nominal.sigma0"]),
            x0=float(fields["nominal.x0"]),
            generator_Q=q,
        )
    provenance = None
    if "init_seed" in fields:
        raw_clip = fields.get("cfg.grad_clip", "none")
        cfg = TrainConfig(
            n0=int(fields["n0"]),
            n_seed=int(fields["cfg.n_seed"]),
            gamma=float(fields["cfg.gamma"]),
            epochs=int(fields["cfg.epochs"]),
            shuffle_seed=int(fields["cfg.shuffle_seed"]),
            sample_stride=int(fields["cfg.sample_stride"]),
            hidden_layers=int(fields["cfg.hidden_layers"]),
            hidden_units=int(fields["cfg.hidden_units"]),
            standardize=fields["cfg.standardize"] == "True",
            grad_clip=None if raw_clip == "none" else float(raw_clip),
            average_tail=float(fields.get("cfg.average_tail", "0")),
        )
        provenance = TrainProvenance(
            config=cfg,
            init_seed=int(fields["init_seed"]),
            final_loss=float(fields["final_loss"]),
            epoch_losses=(float(fields["final_loss"]),),
            n_samples=int(fields["n_samples"]),
            nominal=nominal,
        )
    return TrainedFilter(
        net=net,
        n0=int(fields["n0"]),
        input_center=float(fields["input_center"]),
        input_scale=float(fields["input_scale"]),
        target_center=float(fields["target_center"]),
        target_scale=float(fields["target_scale"]),
        provenance=provenance,
    )
