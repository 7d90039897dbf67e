"""deepfilt: windowed neural-network state estimation with exact
Kalman/extended-Kalman baselines and a reproducible benchmark harness."""

from .errors import NumericalError, TrainingDivergedError, ValidationError
from .models import (
    ModelKind,
    ModelSpec,
    Path,
    RngStream,
    derive_path_seed,
    generate_ensemble,
    simulate_ctmc,
    simulate_path,
)
from .kalman import (
    KalmanState,
    LinearCoeffs,
    ekf_run,
    kf_init,
    kf_run,
    kf_step,
)
from .neural import Gradient, Mlp, MlpArch, backward, forward, loss, mlp_init, sgd_step
from .deepfilter import (
    TrainConfig,
    TrainedFilter,
    WindowSample,
    build_dataset,
    extract_windows,
    infer_path,
    train,
)
from .metrics import Ensemble, ErrorTable, relative_error, sweep_errors
from .harness import (
    ExperimentConfig,
    SeedPack,
    SweepSpec,
    emit_figure_data,
    run_experiment,
    run_table_suite,
)

__version__ = "0.1.0"
