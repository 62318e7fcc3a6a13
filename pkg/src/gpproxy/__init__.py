"""Budget-constrained black-box tuning with a GP surrogate over oracle logits."""

from .data import (
    ApiLedger,
    Dataset,
    Example,
    LogitMapPair,
    LogitMapSet,
    apply_embedder,
    load_dataset,
    save_dataset,
    usage_fraction,
)
from .ensemble import combine_logits, evaluate, predict_ensemble, softmax
from .gp import (
    GateConfig,
    GPPosterior,
    KernelParams,
    NoiseParams,
    UncertaintyEstimate,
    calibrate_gate_threshold,
    fit_gp,
    log_marginal_likelihood,
    predict_mean,
    predict_uncertainty,
    rbf_kernel,
)
from .oracle import (
    CacheOnlyOracle,
    Oracle,
    OracleCache,
    TopKLogprobs,
    align_topk,
    make_synthetic_teacher,
    topk_mask,
    truncate_topk,
)
from .selection import (
    CandidateSet,
    SelectionThresholds,
    build_logitmap,
    calibrate_thresholds,
    filter_select,
    input_distance,
    output_distance,
    random_select,
)
from .synth import SyntheticSpec, generate_synthetic
from .training import (
    EnsembleWeights,
    GatedSignal,
    ProxyParams,
    TrainConfig,
    cpt_loss,
    gated_loss,
    gated_signal,
    grad_check,
    init_proxy,
    plain_ft_loss,
    proxy_forward,
    train_proxy,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
