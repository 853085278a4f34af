"""Patch-based encoder-decoder forecasting on a self-contained autodiff core."""

from .attention import (
    AttentionConfig,
    AttentionParams,
    multi_head_attention,
    scaled_dot_attention,
)
from .data import (
    Scaler,
    SyntheticSpec,
    TimeSeriesTable,
    WindowSample,
    apply_scaler,
    build_decoder_input,
    chronological_split,
    fit_scaler,
    generate_synthetic_multienergy,
    invert_scaler,
    load_csv,
    make_windows,
    save_csv,
)
from .embedding import (
    EmbeddingParams,
    PatchConfig,
    PatchGrid,
    compute_patch_count,
    pad_series,
    patch_embed,
    patch_series,
)
from .errors import (
    CapacityError,
    ConfigError,
    DataError,
    DeterminismError,
    NumericsError,
    PatchformerError,
    ShapeError,
    TrainingError,
)
from .gradcheck import GradCheckReport, ParamCheck, finite_diff_check
from .model import (
    Checkpoint,
    ModelConfig,
    PatchformerModel,
    feed_forward,
    layer_norm,
    load_checkpoint,
    save_checkpoint,
)
from .params import ParameterStore, Rng
from .tensor import Tensor, concat, dropout, mean_var, no_grad, pad_last, unfold_windows
from .training import (
    AdamState,
    MetricReport,
    TraceRow,
    TrainConfig,
    TrainResult,
    adam_step,
    average_reports,
    evaluate,
    evaluate_windows,
    mae_metric,
    mse_loss,
    mse_metric,
    repeat_last_report,
    train,
    write_loss_trace,
)

__version__ = "0.1.0"
