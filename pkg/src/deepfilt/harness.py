"""Experiment runner: simulate -> train -> filter -> score over
nominal/actual model grids, reproducing the benchmark tables.

Protocol per sweep cell: the deep filter is trained on an ensemble of the
nominal model; the baseline filter (Kalman for a linear nominal model,
extended Kalman for the sin nominal model, none for the switching model)
is parameterized by the same nominal model; both are then run on a fresh
ensemble of the actual model and scored against its states over steps
n0..N with the normalized relative-error metric.

Training is cached per distinct (nominal, train-config) pair, so sweeps
over actual-model parameters train once. With identical seeds a run is
bit-reproducible; table CSVs contain no timing, which lives in the .meta
file alongside.
"""

from __future__ import annotations

import dataclasses
import hashlib
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Optional

import numpy as np

from . import config as flatcfg
from .deepfilter import TrainConfig, TrainedFilter, build_dataset, infer_ensemble, \
    infer_path, train
from .errors import ValidationError
from .kalman import LinearCoeffs, ekf_filter_ensemble, kf_filter_ensemble, kf_init
from .metrics import Ensemble, ErrorTable, relative_error
from .models import ModelKind, ModelSpec, derive_path_seed, generate_ensemble, \
    simulate_path


@dataclass(frozen=True)
class SeedPack:
    """Base seeds for the four independent random roles of an experiment."""

    train: int = 1001
    test: int = 2002
    init: int = 3003
    shuffle: int = 4004

    @classmethod
    def rebased(cls, base: int) -> "SeedPack":
        return cls(train=base, test=base + 1, init=base + 2, shuffle=base + 3)


@dataclass(frozen=True)
class SweepSpec:
    """Name of the swept parameter and the value list (table columns)."""

    param: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ValidationError(
                f"unknown sweep parameter {self.param!r}; "
                f"known: {sorted(SWEEP_PARAMS)}"
            )
        if len(self.values) == 0:
            raise ValidationError("sweep.values must be nonempty")


SWEEP_PARAMS = {
    "sigma0_NM", "sigma0_AM", "sigma_NM", "sigma_AM",
    "hidden_units", "hidden_layers",
}

# Desk runs take a second pass so every shuffle order reaches the same
# convergence plateau; one full-scale pass is already ~25x longer.
_PROFILES = {
    "desk": dict(n_seed=500, sample_stride=5, n_test=200, epochs=2),
    "full": dict(n_seed=5000, sample_stride=1, n_test=5000, epochs=1),
}


@dataclass(frozen=True)
class ExperimentConfig:
    nominal: ModelSpec
    actual: ModelSpec
    train: TrainConfig
    baselines: tuple[str, ...] = ()
    sweep: Optional[SweepSpec] = None
    seeds: SeedPack = SeedPack()
    n_test_paths: int = 5000
    output_dir: Optional[str] = None
    name: str = "experiment"

    def __post_init__(self):
        if self.n_test_paths < 1:
            raise ValidationError("n_test_paths must be >= 1")
        for b in self.baselines:
            if b not in ("KF", "EKF"):
                raise ValidationError(f"unknown baseline {b!r}; use KF or EKF")
            required = ModelKind.LINEAR_DRIFT if b == "KF" else ModelKind.SIN_DRIFT
            if self.nominal.kind is not required:
                raise ValidationError(
                    f"baseline {b} requires a {required.value} nominal model, "
                    f"got {self.nominal.kind.value} (the switching model has no "
                    f"exact-filter baseline)"
                )


def apply_profile(cfg: ExperimentConfig, profile: Optional[str]) -> ExperimentConfig:
    """Resize a config to the desk or full scale; None leaves it as is."""
    if profile is None:
        return cfg
    if profile not in _PROFILES:
        raise ValidationError(f"unknown profile {profile!r}; use desk or full")
    p = _PROFILES[profile]
    return dataclasses.replace(
        cfg,
        train=dataclasses.replace(cfg.train, n_seed=p["n_seed"],
                                  sample_stride=p["sample_stride"],
                                  epochs=p["epochs"]),
        n_test_paths=p["n_test"],
    )


def _apply_sweep(cfg: ExperimentConfig, value: float
                 ) -> tuple[ModelSpec, ModelSpec, TrainConfig]:
    nominal, actual, tcfg = cfg.nominal, cfg.actual, cfg.train
    param = cfg.sweep.param
    if param == "sigma0_NM":
        nominal = dataclasses.replace(nominal, sigma0=value)
    elif param == "sigma0_AM":
        actual = dataclasses.replace(actual, sigma0=value)
    elif param == "sigma_NM":
        nominal = dataclasses.replace(nominal, sigma=value)
    elif param == "sigma_AM":
        actual = dataclasses.replace(actual, sigma=value)
    elif param == "hidden_units":
        tcfg = dataclasses.replace(tcfg, hidden_units=int(value))
    elif param == "hidden_layers":
        tcfg = dataclasses.replace(tcfg, hidden_layers=int(value))
    return nominal, actual, tcfg


def train_deep_filter(nominal: ModelSpec, tcfg: TrainConfig,
                      seeds: SeedPack) -> TrainedFilter:
    """Train on a fresh nominal-model ensemble under the given seeds."""
    ensemble = generate_ensemble(nominal, tcfg.n_seed, seeds.train)
    tcfg = dataclasses.replace(tcfg, shuffle_seed=seeds.shuffle)
    dataset = build_dataset(ensemble, tcfg)
    return train(dataset, tcfg, init_seed=seeds.init, nominal=nominal)


def _test_grids(actual: ModelSpec, n_paths: int, seed: int
                ) -> tuple[np.ndarray, np.ndarray]:
    paths = generate_ensemble(actual, n_paths, seed)
    obs = np.stack([p.observations for p in paths])
    states = np.stack([p.states for p in paths])
    return obs, states


def _baseline_grid(name: str, nominal: ModelSpec, obs: np.ndarray) -> np.ndarray:
    init = kf_init([nominal.x0], [[0.0]])
    if name == "KF":
        coeffs = LinearCoeffs.from_model_spec(nominal)
        xbar, _ = kf_filter_ensemble(coeffs, obs, init)
    else:
        xbar, _ = ekf_filter_ensemble(nominal, obs, init)
    return xbar


def _evaluate_cell(nominal: ModelSpec, actual: ModelSpec, fitted: TrainedFilter,
                   baselines: tuple[str, ...], n_test: int, test_seed: int,
                   n0: int) -> dict[str, float]:
    obs, states = _test_grids(actual, n_test, test_seed)
    truth = Ensemble(states[:, n0:])
    errors = {}
    df_grid = infer_ensemble(fitted, obs)
    errors["DF"] = 100.0 * relative_error(Ensemble(df_grid), truth)
    for name in baselines:
        xbar = _baseline_grid(name, nominal, obs)
        errors[name] = 100.0 * relative_error(Ensemble(xbar[:, n0:]), truth)
    return errors


def run_experiment(cfg: ExperimentConfig, workers: int = 1,
                   filter_cache: Optional[dict] = None) -> ErrorTable:
    """Run every sweep cell and assemble the error table.

    Distinct trainings run sequentially first (determinism); cell
    evaluation can fan out over processes with ``workers`` > 1 without
    changing any output. ``filter_cache`` (keyed by (nominal model,
    train config)) shares trained filters across calls under one
    SeedPack; determinism makes a cached filter identical to a
    retrained one.
    """
    values = list(cfg.sweep.values) if cfg.sweep is not None else [None]
    t_start = time.perf_counter()

    resolved = []
    train_jobs = filter_cache if filter_cache is not None else {}
    train_secs: dict[tuple, float] = {}
    for v in values:
        nominal, actual, tcfg = (
            _apply_sweep(cfg, v) if v is not None
            else (cfg.nominal, cfg.actual, cfg.train)
        )
        resolved.append((nominal, actual, tcfg))
        key = (nominal, tcfg)
        if key not in train_jobs:
            t0 = time.perf_counter()
            train_jobs[key] = train_deep_filter(nominal, tcfg, cfg.seeds)
            train_secs[key] = time.perf_counter() - t0
        elif key not in train_secs:
            train_secs[key] = 0.0

    cell_args = [
        (nominal, actual, train_jobs[(nominal, tcfg)], cfg.baselines,
         cfg.n_test_paths, cfg.seeds.test, tcfg.n0)
        for nominal, actual, tcfg in resolved
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cell_errors = list(pool.map(_evaluate_cell_args, cell_args))
    else:
        cached_grids: dict[ModelSpec, tuple] = {}
        cell_errors = []
        for nominal, actual, fitted, baselines, n_test, test_seed, n0 in cell_args:
            if actual not in cached_grids:
                cached_grids[actual] = _test_grids(actual, n_test, test_seed)
            obs, states = cached_grids[actual]
            truth = Ensemble(states[:, n0:])
            errors = {"DF": 100.0 * relative_error(
                Ensemble(infer_ensemble(fitted, obs)), truth)}
            for name in baselines:
                xbar = _baseline_grid(name, nominal, obs)
                errors[name] = 100.0 * relative_error(Ensemble(xbar[:, n0:]), truth)
            cell_errors.append(errors)

    columns = ["%g" % v if v is not None else "base" for v in values]
    table = ErrorTable(columns=columns)
    methods = ["DF", *cfg.baselines]
    for method in methods:
        table.add_row(method, [errs[method] for errs in cell_errors])

    total = time.perf_counter() - t_start
    table.metadata["name"] = cfg.name
    table.metadata["config.digest"] = config_digest(cfg)
    table.metadata["sweep.param"] = cfg.sweep.param if cfg.sweep else "none"
    table.metadata["seeds.train"] = str(cfg.seeds.train)
    table.metadata["seeds.test"] = str(cfg.seeds.test)
    table.metadata["seeds.init"] = str(cfg.seeds.init)
    table.metadata["seeds.shuffle"] = str(cfg.seeds.shuffle)
    table.metadata["hardware"] = f"{platform.machine()} {platform.processor()}".strip()
    for i, (nominal, _, tcfg) in enumerate(resolved):
        key = (nominal, tcfg)
        table.metadata[f"cell.{i}.label"] = columns[i]
        table.metadata[f"cell.{i}.train_seconds"] = "%.3f" % train_secs[key]
    table.metadata["total_seconds"] = "%.3f" % total
    return table


def _evaluate_cell_args(args) -> dict[str, float]:
    return _evaluate_cell(*args)


# ---------------------------------------------------------------------------
# Paper table suite


def _linear_spec(sigma0: float = 0.5) -> ModelSpec:
    return ModelSpec.linear(sigma0=sigma0)


def _sin_spec(sigma0: float = 0.5) -> ModelSpec:
    return ModelSpec.sin_drift(sigma0=sigma0)


def _switch_spec(sigma0: float = 0.3) -> ModelSpec:
    return ModelSpec.switching(sigma0=sigma0)


_SIGMA0_GRID = (0.1, 0.5, 1.0, 1.5, 2.0, 2.5)
_SIGMA0_GRID_SWITCH = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)


def table_config(table_id: str, seeds: SeedPack = SeedPack()) -> ExperimentConfig:
    """The experiment behind one benchmark table (T1 has its own runner)."""
    tid = table_id.upper()
    base = dict(train=TrainConfig(), seeds=seeds, name=tid)
    if tid == "T3":
        return ExperimentConfig(nominal=_linear_spec(), actual=_linear_spec(),
                                baselines=("KF",),
                                sweep=SweepSpec("sigma0_NM", _SIGMA0_GRID), **base)
    if tid == "T4":
        return ExperimentConfig(nominal=_linear_spec(), actual=_linear_spec(),
                                baselines=("KF",),
                                sweep=SweepSpec("sigma0_AM", _SIGMA0_GRID), **base)
    if tid == "T5":
        return ExperimentConfig(nominal=_sin_spec(), actual=_sin_spec(),
                                baselines=("EKF",),
                                sweep=SweepSpec("sigma0_NM", _SIGMA0_GRID), **base)
    if tid == "T6":
        return ExperimentConfig(nominal=_sin_spec(), actual=_sin_spec(),
                                baselines=("EKF",),
                                sweep=SweepSpec("sigma0_AM", _SIGMA0_GRID), **base)
    if tid == "T7":
        return ExperimentConfig(nominal=_linear_spec(), actual=_sin_spec(),
                                baselines=("KF",),
                                sweep=SweepSpec("sigma0_NM", _SIGMA0_GRID), **base)
    if tid == "T8":
        return ExperimentConfig(nominal=_linear_spec(), actual=_sin_spec(),
                                baselines=("KF",),
                                sweep=SweepSpec("sigma0_AM", _SIGMA0_GRID), **base)
    if tid == "T9":
        return ExperimentConfig(nominal=_sin_spec(), actual=_linear_spec(),
                                baselines=("EKF",),
                                sweep=SweepSpec("sigma0_NM", _SIGMA0_GRID), **base)
    if tid == "T10":
        return ExperimentConfig(nominal=_sin_spec(), actual=_linear_spec(),
                                baselines=("EKF",),
                                sweep=SweepSpec("sigma0_AM", _SIGMA0_GRID), **base)
    if tid == "T11":
        return ExperimentConfig(nominal=_switch_spec(), actual=_switch_spec(),
                                sweep=SweepSpec("sigma0_NM", _SIGMA0_GRID_SWITCH),
                                **base)
    if tid == "T12":
        return ExperimentConfig(nominal=_switch_spec(), actual=_switch_spec(),
                                sweep=SweepSpec("sigma0_AM", _SIGMA0_GRID_SWITCH),
                                **base)
    raise ValidationError(f"unknown table suite id {table_id!r}")


def _run_table_1(profile: str, seeds: SeedPack, workers: int,
                 filter_cache: Optional[dict] = None) -> ErrorTable:
    """Hyperparameter grid: DF error over hidden-unit counts x sigma0,
    with the matched Kalman filter as the last column. Nominal and actual
    models coincide here."""
    unit_grid = (3, 5, 10, 20)
    sigma0_grid = (0.1, 0.5, 1.0, 2.0)
    table = ErrorTable(columns=[*("%d" % u for u in unit_grid), "KF"],
                       row_header="sigma0")
    t_start = time.perf_counter()
    meta_cells = []
    for sigma0 in sigma0_grid:
        spec = _linear_spec(sigma0=sigma0)
        cfg = apply_profile(
            ExperimentConfig(nominal=spec, actual=spec, train=TrainConfig(),
                             baselines=("KF",), seeds=seeds, name="T1",
                             sweep=SweepSpec("hidden_units",
                                             tuple(float(u) for u in unit_grid))),
            profile,
        )
        sub = run_experiment(cfg, workers=workers, filter_cache=filter_cache)
        row = list(sub.row("DF"))
        row.append(sub.row("KF")[0])     # KF does not depend on the unit count
        table.add_row("%g" % sigma0, row)
        for u in unit_grid:
            i = sub.columns.index("%d" % u)
            meta_cells.append((sigma0, u, sub.metadata[f"cell.{i}.train_seconds"]))
    table.metadata["name"] = "T1"
    table.metadata["hardware"] = f"{platform.machine()} {platform.processor()}".strip()
    for sigma0, u, secs in meta_cells:
        table.metadata[f"train_seconds.sigma0_{sigma0:g}.units_{u}"] = secs
    table.metadata["total_seconds"] = "%.3f" % (time.perf_counter() - t_start)
    return table


TABLE_IDS = ("T1", "T3", "T4", "T5", "T6", "T7", "T8", "T9", "T10", "T11", "T12")


def run_table_suite(table_id: str, profile: str = "desk",
                    output_dir=None, workers: int = 1,
                    seeds: SeedPack = SeedPack(),
                    emit_figures: bool = True) -> ErrorTable:
    """Run the exact configuration of one benchmark table.

    Writes <out>/<table>.csv and <out>/<table>.meta when output_dir is
    given, plus two sample-path figure CSVs for the table's base
    configuration.
    """
    tid = table_id.upper()
    if tid not in TABLE_IDS:
        raise ValidationError(f"unknown table suite id {table_id!r}")
    cache: dict = {}
    if tid == "T1":
        table = _run_table_1(profile, seeds, workers, cache)
        cfg = apply_profile(
            ExperimentConfig(nominal=_linear_spec(), actual=_linear_spec(),
                             train=TrainConfig(), baselines=("KF",),
                             seeds=seeds, name="T1"),
            profile,
        )
    else:
        cfg = apply_profile(table_config(tid, seeds), profile)
        table = run_experiment(cfg, workers=workers, filter_cache=cache)
    table.metadata["profile"] = profile

    if output_dir is not None:
        output_dir = FsPath(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        table.save_csv(output_dir / f"{tid}.csv")
        table.save_meta(output_dir / f"{tid}.meta")
        if emit_figures:
            base_cfg = dataclasses.replace(cfg, sweep=None)
            fitted = cache.get((base_cfg.nominal, base_cfg.train))
            emit_figure_data(base_cfg, n_sample_paths=2, output_dir=output_dir,
                             fitted=fitted, tag=tid)
    return table


# ---------------------------------------------------------------------------
# Figure data


def emit_figure_data(cfg: ExperimentConfig, n_sample_paths: int, output_dir,
                     fitted: Optional[TrainedFilter] = None,
                     tag: str = "fig") -> list[FsPath]:
    """Per-path CSVs for plotting: truth, observation, baseline filter
    means, and the deep filter estimate with its error.

    Estimate columns for the warm-up region n < n0 are left empty; the
    baseline runs from n = 0. Deterministic in the config seeds.
    """
    if cfg.sweep is not None:
        raise ValidationError("emit_figure_data expects an unswept config")
    if n_sample_paths < 1:
        raise ValidationError("n_sample_paths must be >= 1")
    output_dir = FsPath(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if fitted is None:
        fitted = train_deep_filter(cfg.nominal, cfg.train, cfg.seeds)
    n0 = fitted.n0
    files = []
    for i in range(n_sample_paths):
        path = simulate_path(cfg.actual, derive_path_seed(cfg.seeds.test, i))
        n_grid = len(path.states)
        df = infer_path(fitted, path.observations)
        baseline = xhat = None
        if cfg.baselines:
            init = kf_init([cfg.nominal.x0], [[0.0]])
            obs_row = path.observations[None, :]
            if cfg.baselines[0] == "KF":
                coeffs = LinearCoeffs.from_model_spec(cfg.nominal)
                baseline, xhat = kf_filter_ensemble(coeffs, obs_row, init)
            else:
                baseline, xhat = ekf_filter_ensemble(cfg.nominal, obs_row, init)
        header = ["n"]
        if path.regimes is not None:
            header.append("alpha")
        header += ["x", "y"]
        if baseline is not None:
            header += ["x_hat", "x_bar"]
        header += ["x_tilde", "err_df"]
        lines = [",".join(header)]
        estimates = dict(zip(df.steps.tolist(), df.estimates.tolist()))
        for n in range(n_grid):
            row = [str(n)]
            if path.regimes is not None:
                row.append(str(int(path.regimes[n])))
            row += [repr(float(path.states[n])), repr(float(path.observations[n]))]
            if baseline is not None:
                row += [repr(float(xhat[0, n])), repr(float(baseline[0, n]))]
            if n >= n0:
                xt = estimates[n]
                row += [repr(xt), repr(float(path.states[n]) - xt)]
            else:
                row += ["", ""]
            lines.append(",".join(row))
        out = output_dir / f"fig_{tag}_path{i}.csv"
        out.write_text("\n".join(lines) + "\n")
        files.append(out)
    return files


# ---------------------------------------------------------------------------
# Config file <-> ExperimentConfig


def config_digest(cfg: ExperimentConfig) -> str:
    text = flatcfg.format_flat(experiment_config_to_flat(cfg))
    return "sha256:" + hashlib.sha256(text.encode()).hexdigest()


def _model_to_flat(prefix: str, spec: ModelSpec, out: dict[str, str]) -> None:
    out[f"{prefix}.kind"] = spec.kind.value
    out[f"{prefix}.horizon_T"] = "%.17g" % spec.horizon_T
    out[f"{prefix}.step_eta"] = "%.17g" % spec.step_eta
    out[f"{prefix}.sigma"] = "%.17g" % spec.sigma
    out[f"{prefix}.sigma0"] = "%.17g" % spec.sigma0
    out[f"{prefix}.x0"] = "%.17g" % spec.x0
    if spec.generator_Q is not None:
        out[f"{prefix}.generator_Q"] = " ".join(
            "%.17g" % v for row in spec.generator_Q for v in row
        )


def experiment_config_to_flat(cfg: ExperimentConfig) -> dict[str, str]:
    out: dict[str, str] = {"name": cfg.name}
    _model_to_flat("nominal", cfg.nominal, out)
    _model_to_flat("actual", cfg.actual, out)
    t = cfg.train
    out["train.n0"] = str(t.n0)
    out["train.n_seed"] = str(t.n_seed)
    out["train.gamma"] = "%.17g" % t.gamma
    out["train.epochs"] = str(t.epochs)
    out["train.sample_stride"] = str(t.sample_stride)
    out["train.hidden_layers"] = str(t.hidden_layers)
    out["train.hidden_units"] = str(t.hidden_units)
    out["train.standardize"] = "true" if t.standardize else "false"
    out["train.grad_clip"] = "none" if t.grad_clip is None else "%.17g" % t.grad_clip
    out["train.average_tail"] = "%.17g" % t.average_tail
    out["baselines"] = " ".join(cfg.baselines) if cfg.baselines else "none"
    if cfg.sweep is not None:
        out["sweep.param"] = cfg.sweep.param
        out["sweep.values"] = " ".join("%.17g" % v for v in cfg.sweep.values)
    out["seeds.train"] = str(cfg.seeds.train)
    out["seeds.test"] = str(cfg.seeds.test)
    out["seeds.init"] = str(cfg.seeds.init)
    out["seeds.shuffle"] = str(cfg.seeds.shuffle)
    out["n_test_paths"] = str(cfg.n_test_paths)
    if cfg.output_dir is not None:
        out["output_dir"] = str(cfg.output_dir)
    return out


def _model_from_flat(prefix: str, flat: dict[str, str]) -> ModelSpec:
    kind_key = f"{prefix}.kind"
    if kind_key not in flat:
        raise ValidationError(f"config is missing {kind_key}")
    try:
        kind = ModelKind(flat[kind_key])
    except ValueError:
        raise ValidationError(
            f"{kind_key} must be one of {[k.value for k in ModelKind]}, "
            f"got {flat[kind_key]!r}"
        ) from None
    kw = {}
    for name in ("horizon_T", "step_eta", "sigma", "sigma0", "x0"):
        key = f"{prefix}.{name}"
        if key in flat:
            kw[name] = float(flat[key])
    q_key = f"{prefix}.generator_Q"
    if q_key in flat:
        vals = [float(v) for v in flat[q_key].replace(",", " ").split()]
        if len(vals) != 4:
            raise ValidationError(f"{q_key} must hold 4 numbers (row major 2x2)")
        kw["generator_Q"] = ((vals[0], vals[1]), (vals[2], vals[3]))
    elif kind is ModelKind.SWITCHING_SIN:
        kw["generator_Q"] = ((-2.0, 2.0), (2.0, -2.0))
    if kind is ModelKind.SWITCHING_SIN:
        kw.setdefault("sigma", 0.1)
        kw.setdefault("sigma0", 0.3)
    return ModelSpec(kind=kind, **kw)


def experiment_config_from_flat(flat: dict[str, str]) -> ExperimentConfig:
    known_prefixes = ("nominal.", "actual.", "train.", "sweep.", "seeds.")
    known_bare = {"name", "baselines", "n_test_paths", "output_dir"}
    for key in flat:
        if not key.startswith(known_prefixes) and key not in known_bare:
            raise ValidationError(f"unknown config key {key!r}")

    nominal = _model_from_flat("nominal", flat)
    actual = _model_from_flat("actual", flat)

    tkw = {}
    for name, conv in (("n0", int), ("n_seed", int), ("gamma", float),
                       ("epochs", int), ("sample_stride", int),
                       ("hidden_layers", int), ("hidden_units", int)):
        key = f"train.{name}"
        if key in flat:
            tkw[name] = conv(flat[key])
    if "train.standardize" in flat:
        raw = flat["train.standardize"].lower()
        if raw not in ("true", "false"):
            raise ValidationError("train.standardize must be true or false")
        tkw["standardize"] = raw == "true"
    if "train.grad_clip" in flat:
        raw = flat["train.grad_clip"].lower()
        tkw["grad_clip"] = None if raw == "none" else float(raw)
    if "train.average_tail" in flat:
        tkw["average_tail"] = float(flat["train.average_tail"])
    tcfg = TrainConfig(**tkw)

    baselines: tuple[str, ...] = ()
    if flat.get("baselines", "none").lower() != "none":
        baselines = tuple(flat["baselines"].replace(",", " ").split())

    sweep = None
    if "sweep.param" in flat or "sweep.values" in flat:
        if "sweep.param" not in flat or "sweep.values" not in flat:
            raise ValidationError("sweep requires both sweep.param and sweep.values")
        values = tuple(float(v) for v in
                       flat["sweep.values"].replace(",", " ").split())
        sweep = SweepSpec(flat["sweep.param"], values)

    defaults = SeedPack()
    seeds = SeedPack(
        train=int(flat.get("seeds.train", defaults.train)),
        test=int(flat.get("seeds.test", defaults.test)),
        init=int(flat.get("seeds.init", defaults.init)),
        shuffle=int(flat.get("seeds.shuffle", defaults.shuffle)),
    )
    return ExperimentConfig(
        nominal=nominal,
        actual=actual,
        train=tcfg,
        baselines=baselines,
        sweep=sweep,
        seeds=seeds,
        n_test_paths=int(flat.get("n_test_paths", 5000)),
        output_dir=flat.get("output_dir"),
        name=flat.get("name", "experiment"),
    )
