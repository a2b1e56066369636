"""degenkit: train ensembles of RNNs on synthetic neuroscience tasks and
quantify how much their solutions differ at the behavioral, dynamical, and
weight levels."""

__version__ = "0.1.0"

from .tasks import (  # noqa: F401
    TaskKind,
    TaskSpec,
    OodMode,
    TrialBatch,
    generate,
    gen_nbff,
    gen_delayed_discrimination,
    gen_sinewave,
    gen_path_integration,
    make_ood_variant,
    nbff_spec,
    delayed_discrimination_spec,
    sine_wave_spec,
    path_integration_spec,
)
from .rnn import (  # noqa: F401
    HiddenTrajectory,
    Parameterization,
    ParamMode,
    RnnParams,
    forward,
    init_params,
)
from .training import (  # noqa: F401
    CosineRestarts,
    ReduceOnPlateau,
    Regularizer,
    TrainConfig,
    TrainReport,
    adam_init,
    adam_step,
    bptt_grads,
    l1_penalty,
    masked_mse,
    mup_lr,
    nuclear_penalty,
    train,
)
from .dynamics import (  # noqa: F401
    DistanceMatrix,
    DsaConfig,
    ForwardOperator,
    choose_lag,
    delay_embed,
    dsa_distance,
    fit_dmd,
    mds_embed,
    mean_offdiagonal,
    pairwise_dsa,
    pca_reduce,
    svcca_distance,
)
from .weights_behavior import (  # noqa: F401
    OodResult,
    behavioral_degeneracy,
    ood_eval,
    pif_distance,
    pif_distance_bruteforce,
)
from .feature_learning import (  # noqa: F401
    KernelMatrix,
    empirical_ntk,
    kernel_alignment,
    representation_alignment,
    weight_change_norm,
)
from .probes import ProbeConfig, build_history_dataset, estimate_memory_demand, fit_mlp_probe  # noqa: F401
from .checkpoint import load_checkpoint, save_checkpoint  # noqa: F401
from .config import (  # noqa: F401
    EnsembleConfig,
    ExperimentConfig,
    MetricsConfig,
    SweepAxis,
    apply_sweep_value,
    config_hash,
    default_probe_config,
    default_train_config,
    parse_config,
    serialize_config,
)
from .exceptions import (  # noqa: F401
    ConfigError,
    CorruptCheckpoint,
    DegenError,
    InsufficientData,
    NumericFailure,
)
