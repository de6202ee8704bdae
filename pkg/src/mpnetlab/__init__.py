"""Channel-estimation lab: unfolded matching pursuit with a trainable dictionary,
classical baselines, and a reproducible experiment harness."""

from .arrays import (
    AntennaArray,
    Dictionary,
    build_dictionary,
    doa_grid_ula,
    doa_grid_upa,
    make_ula,
    make_upa,
    perturb_array,
    steering_matrix,
    steering_vector,
)
from .channels import (
    ArrayEvent,
    ChannelGenConfig,
    ChannelSample,
    ChannelStream,
    FixedSnr,
    MultipathChannel,
    ReplayStream,
    TruncatedGaussianSnr,
    age_antennas,
    break_antennas,
    dump_stream,
    generate_channel,
    load_stream,
    make_stream,
    observe,
    sample_snr,
)
from .estimators import (
    Estimate,
    StoppingRule,
    ls_estimate,
    matching_pursuit,
    omp,
    sc_threshold,
    should_stop,
)
from .experiments import (
    ArraySpec,
    ExperimentConfig,
    ExperimentResult,
    MetricRecord,
    SnrLossSpec,
    parse_estimator,
    run_learning_experiment,
    snr_loss_experiment,
)
from .metrics import depth_histogram, rmse, snr_histogram, snr_out
from .mpnet import (
    AdamState,
    ForwardTrace,
    MinibatchRecord,
    MpNetModel,
    OnlineTrainer,
    TrainConfig,
    adam_step,
    backward,
    estimate,
    forward,
    ht1,
    load_checkpoint,
    save_checkpoint,
    train_online,
    xavier_init,
)
from .config import ConfigError, config_from_mapping, load_config

__all__ = [name for name in dir() if not name.startswith("_")]
