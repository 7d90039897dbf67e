"""Window extraction, dataset pooling, SGD training, and inference."""

import numpy as np
import pytest

from deepfilt.deepfilter import (
    TrainConfig,
    TrainedFilter,
    WindowSample,
    build_dataset,
    extract_windows,
    infer_ensemble,
    infer_path,
    load_filter,
    save_filter,
    train,
)
from deepfilt.errors import TrainingDivergedError, ValidationError
from deepfilt.metrics import Ensemble, relative_error
from deepfilt.models import ModelSpec, Path, generate_ensemble
from deepfilt.neural import Mlp, MlpArch, backward, forward, mlp_init, sgd_step


def fake_path(n_steps=1000, seed=0, states=None, observations=None):
    if states is None:
        rng = np.random.default_rng(seed)
        states = rng.normal(size=n_steps + 1)
    if observations is None:
        observations = states + 0.1
    return Path(states=np.asarray(states, dtype=float),
                observations=np.asarray(observations, dtype=float), seed=seed)


class TestExtractWindows:
    def test_count_at_paper_sizes(self):
        samples = extract_windows(fake_path(1000), n0=50)
        assert len(samples) == 951

    def test_first_window_indexing(self):
        path = fake_path(1000)
        samples = extract_windows(path, n0=50)
        first = samples[0]
        assert first.input[0] == path.observations[50]
        assert first.input[49] == path.observations[1]
        assert first.target == path.states[50]
        assert first.source == (path.seed, 50)

    def test_degenerate_window_size_one(self):
        path = fake_path(100)
        samples = extract_windows(path, n0=1)
        assert len(samples) == 100
        assert samples[7].input.tolist() == [path.observations[8]]
        assert samples[7].target == path.states[8]

    def test_short_path_rejected(self):
        with pytest.raises(ValidationError, match="window"):
            extract_windows(fake_path(10), n0=11)


class TestBuildDataset:
    def test_paper_scale_sample_count(self):
        # 5000 paths x 951 windows = 4,755,000 samples at stride 1.
        ensemble = [fake_path(1000, seed=i,
                              states=np.zeros(1001), observations=np.zeros(1001))
                    for i in range(5000)]
        ds = build_dataset(ensemble, TrainConfig(n0=50, sample_stride=1))
        assert len(ds) == 4_755_000

    def test_stride_keeps_congruent_kappas(self):
        ensemble = [fake_path(100, seed=i) for i in range(3)]
        ds = build_dataset(ensemble, TrainConfig(n0=10, sample_stride=7))
        kappas = np.unique(ds.idx_kappa)
        assert ((kappas - 10) % 7 == 0).all()
        assert kappas.min() == 10

    def test_stride_saturation_gives_one_window_per_path(self):
        ensemble = [fake_path(100, seed=i) for i in range(4)]
        ds = build_dataset(ensemble, TrainConfig(n0=10, sample_stride=91))
        assert len(ds) == 4
        assert set(ds.idx_kappa.tolist()) == {10}

    def test_shuffle_is_deterministic_in_seed(self):
        ensemble = [fake_path(100, seed=i) for i in range(5)]
        a = build_dataset(ensemble, TrainConfig(n0=10, shuffle_seed=3))
        b = build_dataset(ensemble, TrainConfig(n0=10, shuffle_seed=3))
        np.testing.assert_array_equal(a.idx_path, b.idx_path)
        np.testing.assert_array_equal(a.idx_kappa, b.idx_kappa)
        c = build_dataset(ensemble, TrainConfig(n0=10, shuffle_seed=4))
        assert not np.array_equal(a.idx_kappa, c.idx_kappa)

    def test_samples_match_extract_windows(self):
        path = fake_path(60, seed=9)
        ds = build_dataset([path], TrainConfig(n0=12, shuffle_seed=0))
        direct = {s.source[1]: s for s in extract_windows(path, 12)}
        assert len(ds) == len(direct)
        for i in range(len(ds)):
            sample = ds[i]
            np.testing.assert_array_equal(sample.input,
                                          direct[sample.source[1]].input)
            assert sample.target == direct[sample.source[1]].target

    def test_empty_ensemble_rejected(self):
        with pytest.raises(ValidationError, match="at least one"):
            build_dataset([], TrainConfig())


def tiny_cfg(**kw):
    kw.setdefault("n0", 5)
    kw.setdefault("hidden_layers", 2)
    kw.setdefault("hidden_units", 3)
    kw.setdefault("n_seed", 1)
    return TrainConfig(**kw)


class TestTrain:
    def test_constant_zero_target_drives_output_down(self):
        # 100 paths x 100 windows = 1e4 single-sample updates.
        rng = np.random.default_rng(0)
        ensemble = [
            fake_path(104, seed=i, states=np.zeros(105),
                      observations=rng.normal(size=105))
            for i in range(100)
        ]
        cfg = tiny_cfg(shuffle_seed=1)
        ds = build_dataset(ensemble, cfg)
        assert len(ds) == 10_000
        fitted = train(ds, cfg, init_seed=2)
        outputs = infer_ensemble(fitted, np.stack(
            [p.observations for p in ensemble[:20]]
        ))
        assert float(np.abs(outputs).mean()) < 1e-2

    def test_epochs_zero_rejected_by_config(self):
        with pytest.raises(ValidationError, match="epochs"):
            TrainConfig(epochs=0)

    def test_bit_exact_determinism(self):
        ensemble = [fake_path(60, seed=i) for i in range(6)]
        cfg = tiny_cfg(epochs=2, shuffle_seed=5)
        a = train(build_dataset(ensemble, cfg), cfg, init_seed=3)
        b = train(build_dataset(ensemble, cfg), cfg, init_seed=3)
        for wa, wb in zip(a.net.weights, b.net.weights):
            np.testing.assert_array_equal(wa, wb)
        assert a.input_center == b.input_center
        assert a.provenance.final_loss == b.provenance.final_loss

    def test_single_step_equals_public_ops(self):
        # One sample, no standardization/clip/averaging: the in-place loop
        # must equal forward + backward + sgd_step bit for bit.
        sample = WindowSample(input=np.array([0.3, -1.2, 0.7]),
                              target=0.9, source=(0, 3))
        cfg = TrainConfig(n0=3, hidden_layers=2, hidden_units=4, n_seed=1,
                          standardize=False, grad_clip=None, average_tail=0.0)
        fitted = train([sample], cfg, init_seed=11)
        reference = mlp_init(MlpArch(3, 2, 4, 1), 11)
        out, acts = forward(reference, sample.input)
        grad = backward(reference, acts, out - np.array([sample.target]))
        reference = sgd_step(reference, grad, cfg.gamma)
        for wa, wb in zip(fitted.net.weights, reference.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_divergent_input_names_the_step(self):
        samples = [
            WindowSample(input=np.ones(3), target=0.0, source=(0, 3)),
            WindowSample(input=np.ones(3), target=np.inf, source=(0, 4)),
        ]
        cfg = TrainConfig(n0=3, hidden_layers=1, hidden_units=2, n_seed=1,
                          standardize=False)
        with pytest.raises(TrainingDivergedError) as err:
            train(samples, cfg, init_seed=0)
        assert err.value.step_index == 1
        assert "step 1" in str(err.value)

    def test_trailing_loss_recorded_per_epoch(self):
        ensemble = [fake_path(60, seed=i) for i in range(4)]
        cfg = tiny_cfg(epochs=3)
        fitted = train(build_dataset(ensemble, cfg), cfg, init_seed=1)
        assert len(fitted.provenance.epoch_losses) == 3
        assert fitted.provenance.final_loss == fitted.provenance.epoch_losses[-1]


class TestInferPath:
    def zero_filter(self, n0=4):
        arch = MlpArch(input_dim=n0, hidden_layers=1, hidden_units=2)
        net = Mlp(arch, [np.zeros((2, n0)), np.zeros((1, 2))],
                  [np.zeros(2), np.zeros(1)])
        return TrainedFilter(net=net, n0=n0, input_center=0.0, input_scale=1.0,
                             target_center=0.0, target_scale=1.0)

    def test_zero_network_outputs_zero(self):
        out = infer_path(self.zero_filter(), np.arange(20.0))
        assert len(out) == 16
        assert all(v == 0.0 for _, v in out)

    def test_steps_run_from_n0_to_N(self):
        out = infer_path(self.zero_filter(n0=4), np.arange(10.0))
        assert out.steps.tolist() == [4, 5, 6, 7, 8, 9]
        n, v = out[0]
        assert (n, v) == (4, 0.0)

    def test_pure_function(self):
        rng = np.random.default_rng(1)
        ensemble = [fake_path(60, seed=i) for i in range(4)]
        cfg = tiny_cfg()
        fitted = train(build_dataset(ensemble, cfg), cfg, init_seed=7)
        obs = rng.normal(size=61)
        a = infer_path(fitted, obs)
        b = infer_path(fitted, obs)
        np.testing.assert_array_equal(a.estimates, b.estimates)

    def test_too_short_observations_rejected(self):
        with pytest.raises(ValidationError, match="at least"):
            infer_path(self.zero_filter(n0=4), np.zeros(4))

    def test_training_loss_matches_reevaluation_route(self):
        # Mean 0.5|x_tilde - x|^2 over one path via infer_path equals the
        # mean loss of that path's stored samples through the final net.
        ensemble = [fake_path(60, seed=i) for i in range(3)]
        cfg = tiny_cfg()
        fitted = train(build_dataset(ensemble, cfg), cfg, init_seed=5)
        path = ensemble[0]
        out = infer_path(fitted, path.observations)
        route_a = 0.5 * np.mean(
            (out.estimates - path.states[fitted.n0:]) ** 2
        )
        samples = extract_windows(path, fitted.n0)
        losses = []
        for s in samples:
            z = (s.input - fitted.input_center) / fitted.input_scale
            raw_out, _ = forward(fitted.net, z)
            pred = raw_out[0] * fitted.target_scale + fitted.target_center
            losses.append(0.5 * (pred - s.target) ** 2)
        route_b = float(np.mean(losses))
        assert abs(route_a - route_b) < 1e-12


@pytest.fixture(scope="module")
def desk_linear():
    """Desk-scale linear baseline: trained filter plus a test ensemble."""
    nominal = ModelSpec.linear()
    cfg = TrainConfig(n_seed=500, sample_stride=5, epochs=2, shuffle_seed=4004)
    ensemble = generate_ensemble(nominal, cfg.n_seed, base_seed=1001)
    fitted = train(build_dataset(ensemble, cfg), cfg, init_seed=3003,
                   nominal=nominal)
    test_paths = generate_ensemble(ModelSpec.linear(), 200, base_seed=2002)
    obs = np.stack([p.observations for p in test_paths])
    states = np.stack([p.states for p in test_paths])
    return nominal, cfg, ensemble, fitted, obs, states


def df_percent_error(fitted, obs, states):
    grid = infer_ensemble(fitted, obs)
    return 100.0 * relative_error(Ensemble(grid), Ensemble(states[:, fitted.n0:]))


class TestDeskScaleBehavior:
    def test_desk_error_is_in_working_range(self, desk_linear):
        _, _, _, fitted, obs, states = desk_linear
        err = df_percent_error(fitted, obs, states)
        assert err <= 9.0

    def test_epoch_losses_do_not_increase(self, desk_linear):
        _, cfg, _, fitted, _, _ = desk_linear
        first, second = fitted.provenance.epoch_losses
        assert second <= first * 1.05

    def test_shuffle_seed_moves_error_by_less_than_half_point(self, desk_linear):
        import dataclasses
        nominal, cfg, ensemble, fitted, obs, states = desk_linear
        cfg2 = dataclasses.replace(cfg, shuffle_seed=977)
        fitted2 = train(build_dataset(ensemble, cfg2), cfg2, init_seed=3003)
        a = df_percent_error(fitted, obs, states)
        b = df_percent_error(fitted2, obs, states)
        assert abs(a - b) <= 0.5

    def test_window_order_convention_is_immaterial(self, desk_linear):
        # Retraining with oldest-first windows lands within 1pp.
        from deepfilt.neural import forward_batch
        nominal, cfg, ensemble, fitted, obs, states = desk_linear
        ds = build_dataset(ensemble, cfg)
        reversed_samples = []
        for i in range(len(ds)):
            s = ds[i]
            reversed_samples.append(
                WindowSample(input=s.input[::-1].copy(), target=s.target,
                             source=s.source)
            )
        fitted_rev = train(reversed_samples, cfg, init_seed=3003)
        from numpy.lib.stride_tricks import sliding_window_view
        rows = []
        for row in obs:
            wins = sliding_window_view(row, fitted_rev.n0)[1:]   # oldest first
            z = (wins - fitted_rev.input_center) / fitted_rev.input_scale
            out = forward_batch(fitted_rev.net, z)[:, 0]
            rows.append(out * fitted_rev.target_scale + fitted_rev.target_center)
        err_rev = 100.0 * relative_error(
            Ensemble(np.stack(rows)), Ensemble(states[:, fitted_rev.n0:])
        )
        err = df_percent_error(fitted, obs, states)
        assert abs(err - err_rev) <= 1.0


class TestPersistence:
    def test_round_trip_preserves_behavior(self, tmp_path, desk_linear):
        nominal, cfg, _, fitted, obs, _ = desk_linear
        f = tmp_path / "filter.txt"
        save_filter(fitted, f)
        loaded = load_filter(f)
        assert loaded.n0 == fitted.n0
        assert loaded.input_center == fitted.input_center
        assert loaded.target_scale == fitted.target_scale
        for wa, wb in zip(fitted.net.weights, loaded.net.weights):
            np.testing.assert_array_equal(wa, wb)
        a = infer_path(fitted, obs[0])
        b = infer_path(loaded, obs[0])
        np.testing.assert_array_equal(a.estimates, b.estimates)
        prov = loaded.provenance
        assert prov.nominal == nominal
        assert prov.config.n_seed == cfg.n_seed
        assert prov.config.sample_stride == cfg.sample_stride

    def test_rejects_foreign_file(self, tmp_path):
        f = tmp_path / "x.txt"
        f.write_text("something else\n")
        with pytest.raises(ValidationError, match="deep filter"):
            load_filter(f)
