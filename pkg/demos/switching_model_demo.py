"""Regime-switching model: the state follows sin(n eta alpha_n + noise)
where alpha jumps between 1 and 2 as a continuous-time Markov chain.
No exact filter applies; the windowed network still tracks the state and
catches up shortly after each jump.

Writes figure CSVs (n, alpha, x, y, x_tilde, err_df) you can plot with
anything; prints where the estimation error concentrates.
"""

import numpy as np

from deepfilt.deepfilter import TrainConfig
from deepfilt.harness import ExperimentConfig, SeedPack, emit_figure_data
from deepfilt.models import ModelSpec

cfg = ExperimentConfig(
    nominal=ModelSpec.switching(),     # sigma = 0.1, sigma0 = 0.3, Q = [[-2,2],[2,-2]]
    actual=ModelSpec.switching(),
    train=TrainConfig(n_seed=200, sample_stride=10, epochs=2),
    seeds=SeedPack(),
    n_test_paths=50,
    name="switching-demo",
)

print("training on regime-switching paths and writing two sample paths ...")
files = emit_figure_data(cfg, n_sample_paths=2, output_dir="demo_out",
                         tag="switching")
for f in files:
    print(f"  wrote {f}")

# Where does the error live? Compare steps near regime jumps vs far away.
for f in files:
    rows = [line.split(",") for line in f.read_text().splitlines()[1:]]
    alpha = np.array([int(r[1]) for r in rows])
    err = np.array([abs(float(r[-1])) if r[-1] else np.nan for r in rows])
    jumps = np.flatnonzero(alpha[1:] != alpha[:-1]) + 1
    near = np.zeros(len(alpha), dtype=bool)
    for j in jumps:
        near[max(0, j - 25):j + 25] = True
    valid = ~np.isnan(err)
    print(f"{f.name}: {len(jumps)} regime jumps; "
          f"mean |x - x_tilde| near jumps {np.nanmean(err[near & valid]):.3f} "
          f"vs elsewhere {np.nanmean(err[~near & valid]):.3f}")
print("\nThe error concentrates around the jumps, where the window still "
      "holds pre-jump observations; between jumps the estimate tracks "
      "the state closely.")
