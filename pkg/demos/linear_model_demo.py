"""Linear model walkthrough: simulate, filter with the exact Kalman
recursion, train the windowed network, and compare errors.

Runs in about a minute at a reduced scale. For the benchmark-grade
numbers use the harness (see tables_demo.py) or the CLI.
"""

import numpy as np

from deepfilt.deepfilter import TrainConfig, build_dataset, infer_ensemble, train
from deepfilt.kalman import LinearCoeffs, kf_filter_ensemble, kf_init
from deepfilt.metrics import Ensemble, relative_error
from deepfilt.models import ModelSpec, generate_ensemble

# The state drifts upward at rate 0.1 and is observed through additive
# Gaussian noise; x_0 = 1, T = 5, eta = 0.005, so each path has 1001 points.
nominal = ModelSpec.linear(sigma=0.7, sigma0=0.5)
print(f"model: N = {nominal.n_steps_N} steps, sigma = {nominal.sigma}, "
      f"sigma0 = {nominal.sigma0}")

# --- train the deep filter on nominal Monte Carlo paths -------------------
cfg = TrainConfig(n_seed=200, sample_stride=10, epochs=2, shuffle_seed=4004)
print(f"simulating {cfg.n_seed} training paths ...")
ensemble = generate_ensemble(nominal, cfg.n_seed, base_seed=1001)
dataset = build_dataset(ensemble, cfg)
print(f"training on {len(dataset)} windows of {cfg.n0} observations ...")
fitted = train(dataset, cfg, init_seed=3003, nominal=nominal)
print(f"trailing training loss: {fitted.provenance.final_loss:.4f}")

# --- score against fresh paths and the exact Kalman filter ----------------
test_paths = generate_ensemble(nominal, 100, base_seed=2002)
obs = np.stack([p.observations for p in test_paths])
states = np.stack([p.states for p in test_paths])
truth = Ensemble(states[:, cfg.n0:])

df_grid = infer_ensemble(fitted, obs)
df_err = 100 * relative_error(Ensemble(df_grid), truth)

coeffs = LinearCoeffs.from_model_spec(nominal)
xbar, _ = kf_filter_ensemble(coeffs, obs, kf_init([nominal.x0], [[0.0]]))
kf_err = 100 * relative_error(Ensemble(xbar[:, cfg.n0:]), truth)

print(f"\nrelative error over steps {cfg.n0}..{nominal.n_steps_N}:")
print(f"  Kalman filter (exact):  {kf_err:.2f}%")
print(f"  deep filter (windowed): {df_err:.2f}%")
print("\nThe Kalman filter is optimal here; the trained network comes "
      "close without knowing the model.")
