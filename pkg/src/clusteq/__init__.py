"""Turbo equalization over ISI channels with clustered adaptive NLMS banks."""

from .adaptive import (
    AdaptiveFilter,
    BankRunResult,
    FilterBank,
    FrameStreams,
    TrainingSchedule,
    build_regressor,
    combine_outputs,
    nlms_step,
    run_direct_teq,
    run_hard_clustered_teq,
    run_soft_clustered_teq,
    select_output,
)
from .channel import ChannelModel, build_linearization, ebn0_to_noise_var, transmit
from .clustering import (
    Association,
    ClusterModel,
    assoc_probs,
    da_cluster,
    lbg_cluster,
    nearest_centroid,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config_text
from .harness import (
    TurboTrace,
    find_snr_threshold,
    run_ber_sweep,
    run_exit_chart,
    run_turbo_trial,
)
from .mmse import (
    FilterTaps,
    PriorDiag,
    converged_cluster_filter,
    equalizer_extrinsic_llr,
    exact_mmse_filters,
    filter_mse,
    mmse_estimate,
    mse_gap_and_bound,
    wiener_filters,
)
from .modem import (
    CodeConfig,
    LlrFrame,
    SoftSymbolStats,
    bpsk_map,
    conv_encode,
    deinterleave,
    hard_decide,
    interleave,
    llr_to_stats,
    siso_decode,
)

__version__ = "0.1.0"
