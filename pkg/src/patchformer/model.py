"""Encoder-decoder forecaster over patch tokens, one channel at a time.

Every channel of a multivariate series runs through the same weights: the
encoder ingests the patch tokens of the lookback window, the decoder ingests
the tokens of the second half of the lookback followed by a zero placeholder
for the horizon, and a flattening linear head maps the decoder output to all
``pred_len`` steps in a single pass.

Normalisation follows the residual sums: each sublayer output is added to its
input and the sum is normalised over both the patch and feature axes, with a
learnable per-feature scale and shift.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .attention import AttentionConfig, AttentionParams, multi_head_attention
from .embedding import EmbeddingParams, PatchConfig, compute_patch_count, patch_embed
from .errors import ConfigError, DataError, ShapeError
from .params import ParameterStore, Rng
from .tensor import Tensor, concat, dropout, mean_var, no_grad

__all__ = [
    "ModelConfig",
    "LayerNormParams",
    "layer_norm",
    "FeedForwardParams",
    "feed_forward",
    "EncoderLayerParams",
    "encoder_layer",
    "DecoderLayerParams",
    "decoder_layer",
    "PatchformerModel",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; ``seed`` pins the initial weights."""

    seq_len: int
    pred_len: int
    n_channels: int
    patch_len: int = 16
    stride: int = 8
    d_model: int = 512
    n_heads: int = 8
    d_k: int | None = None
    d_v: int | None = None
    d_ff: int | None = None
    n_encoder_layers: int = 2
    n_decoder_layers: int = 1
    dropout: float = 0.1
    layer_norm_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.seq_len < 1 or self.pred_len < 1 or self.n_channels < 1:
            raise ConfigError(
                f"seq_len, pred_len and n_channels must be positive, got "
                f"{self.seq_len}, {self.pred_len}, {self.n_channels}"
            )
        if self.n_encoder_layers < 1 or self.n_decoder_layers < 1:
            raise ConfigError("the model needs at least one encoder and one decoder layer")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.patch_len < 1 or not 1 <= self.stride <= self.patch_len:
            raise ConfigError(
                f"need 1 <= stride <= patch_len, got stride {self.stride} "
                f"and patch_len {self.patch_len}"
            )
        if self.seq_len < self.patch_len:
            raise ConfigError(
                f"seq_len {self.seq_len} is shorter than patch_len {self.patch_len}"
            )
        if self.decoder_len < self.patch_len:
            raise ConfigError(
                f"decoder input of length {self.decoder_len} "
                f"(seq_len // 2 + pred_len) is shorter than patch_len {self.patch_len}"
            )

    @property
    def label_len(self) -> int:
        return self.seq_len // 2

    @property
    def decoder_len(self) -> int:
        return self.label_len + self.pred_len

    @property
    def ffn_width(self) -> int:
        return self.d_ff if self.d_ff is not None else 4 * self.d_model

    @property
    def attention(self) -> AttentionConfig:
        return AttentionConfig(
            d_model=self.d_model, n_heads=self.n_heads, d_k=self.d_k, d_v=self.d_v
        )

    @property
    def patching(self) -> PatchConfig:
        probe = PatchConfig(
            patch_len=self.patch_len, stride=self.stride, d_model=self.d_model, max_patches=1
        )
        z_enc = compute_patch_count(self.seq_len, probe)
        z_dec = compute_patch_count(self.decoder_len, probe)
        return PatchConfig(
            patch_len=self.patch_len,
            stride=self.stride,
            d_model=self.d_model,
            max_patches=max(z_enc, z_dec),
        )


@dataclass
class LayerNormParams:
    gamma: Tensor  # (d_model,)
    beta: Tensor  # (d_model,)
    eps: float

    @classmethod
    def build(
        cls, store: ParameterStore, prefix: str, d_model: int, eps: float
    ) -> "LayerNormParams":
        return cls(
            gamma=store.ones(f"{prefix}.gamma", (d_model,)),
            beta=store.zeros(f"{prefix}.beta", (d_model,)),
            eps=eps,
        )


def layer_norm(x: Tensor, p: LayerNormParams) -> Tensor:
    """Normalise each token block over its patch and feature axes jointly.

    For a (..., Z, D) input the mean and population standard deviation are
    taken over the trailing Z * D entries, then a per-feature affine applies.
    """
    if x.ndim < 2:
        raise ShapeError(f"layer_norm expects at least 2 dims, got shape {x.shape}")
    mean, var = mean_var(x, axis=(-2, -1), keepdims=True)
    normed = (x - mean) / (var.sqrt() + p.eps)
    return normed * p.gamma + p.beta


@dataclass
class FeedForwardParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def build(
        cls, store: ParameterStore, prefix: str, d_model: int, d_ff: int
    ) -> "FeedForwardParams":
        return cls(
            w1=store.weight(f"{prefix}.w1", (d_model, d_ff)),
            b1=store.zeros(f"{prefix}.b1", (d_ff,)),
            w2=store.weight(f"{prefix}.w2", (d_ff, d_model)),
            b2=store.zeros(f"{prefix}.b2", (d_model,)),
        )


def feed_forward(x: Tensor, p: FeedForwardParams) -> Tensor:
    return ((x @ p.w1 + p.b1).relu() @ p.w2) + p.b2


@dataclass
class EncoderLayerParams:
    attn: AttentionParams
    norm1: LayerNormParams
    ffn: FeedForwardParams
    norm2: LayerNormParams

    @classmethod
    def build(cls, store: ParameterStore, prefix: str, cfg: ModelConfig) -> "EncoderLayerParams":
        return cls(
            attn=AttentionParams.build(store, f"{prefix}.self_attn", cfg.attention),
            norm1=LayerNormParams.build(store, f"{prefix}.norm1", cfg.d_model, cfg.layer_norm_eps),
            ffn=FeedForwardParams.build(store, f"{prefix}.ffn", cfg.d_model, cfg.ffn_width),
            norm2=LayerNormParams.build(store, f"{prefix}.norm2", cfg.d_model, cfg.layer_norm_eps),
        )


def encoder_layer(
    x: Tensor,
    p: EncoderLayerParams,
    rate: float = 0.0,
    rng: Rng | None = None,
    training: bool = False,
) -> Tensor:
    attended = multi_head_attention(
        x, x, p.attn, attn_dropout=rate, rng=rng, training=training
    )
    x = layer_norm(x + dropout(attended, rate, rng, training), p.norm1)
    lifted = feed_forward(x, p.ffn)
    return layer_norm(x + dropout(lifted, rate, rng, training), p.norm2)


@dataclass
class DecoderLayerParams:
    self_attn: AttentionParams
    norm1: LayerNormParams
    cross_attn: AttentionParams
    norm2: LayerNormParams
    ffn: FeedForwardParams
    norm3: LayerNormParams

    @classmethod
    def build(cls, store: ParameterStore, prefix: str, cfg: ModelConfig) -> "DecoderLayerParams":
        return cls(
            self_attn=AttentionParams.build(store, f"{prefix}.self_attn", cfg.attention),
            norm1=LayerNormParams.build(store, f"{prefix}.norm1", cfg.d_model, cfg.layer_norm_eps),
            cross_attn=AttentionParams.build(store, f"{prefix}.cross_attn", cfg.attention),
            norm2=LayerNormParams.build(store, f"{prefix}.norm2", cfg.d_model, cfg.layer_norm_eps),
            ffn=FeedForwardParams.build(store, f"{prefix}.ffn", cfg.d_model, cfg.ffn_width),
            norm3=LayerNormParams.build(store, f"{prefix}.norm3", cfg.d_model, cfg.layer_norm_eps),
        )


def decoder_layer(
    x: Tensor,
    memory: Tensor,
    p: DecoderLayerParams,
    rate: float = 0.0,
    rng: Rng | None = None,
    training: bool = False,
) -> Tensor:
    attended = multi_head_attention(
        x, x, p.self_attn, attn_dropout=rate, rng=rng, training=training
    )
    x = layer_norm(x + dropout(attended, rate, rng, training), p.norm1)
    crossed = multi_head_attention(
        x, memory, p.cross_attn, attn_dropout=rate, rng=rng, training=training
    )
    x = layer_norm(x + dropout(crossed, rate, rng, training), p.norm2)
    lifted = feed_forward(x, p.ffn)
    return layer_norm(x + dropout(lifted, rate, rng, training), p.norm3)


class PatchformerModel:
    """The full forecaster: shared embedding, encoder stack, decoder stack, head."""

    def __init__(self, cfg: ModelConfig, store: ParameterStore):
        self.cfg = cfg
        self.store = store
        patching = cfg.patching
        self.patching = patching
        self.z_encoder = compute_patch_count(cfg.seq_len, patching)
        self.z_decoder = compute_patch_count(cfg.decoder_len, patching)
        self.embedding = EmbeddingParams.build(store, "embed", patching)
        self.encoder_layers = [
            EncoderLayerParams.build(store, f"encoder.{i}", cfg)
            for i in range(cfg.n_encoder_layers)
        ]
        self.decoder_layers = [
            DecoderLayerParams.build(store, f"decoder.{i}", cfg)
            for i in range(cfg.n_decoder_layers)
        ]
        self.head_weight = store.weight(
            "head.weight", (self.z_decoder * cfg.d_model, cfg.pred_len)
        )

    @classmethod
    def build(cls, cfg: ModelConfig) -> "PatchformerModel":
        return cls(cfg, ParameterStore(cfg.seed))

    @property
    def n_params(self) -> int:
        return self.store.total_size()

    def decoder_series(self, x: Tensor) -> Tensor:
        """Second half of the lookback followed by zeros for the horizon."""
        cfg = self.cfg
        zeros = Tensor(np.zeros(x.shape[:-1] + (cfg.pred_len,)))
        if cfg.label_len == 0:
            return zeros
        label = x[..., cfg.seq_len - cfg.label_len :]
        return concat([label, zeros], axis=-1)

    def forward_series(
        self,
        x,
        training: bool = False,
        rng: Rng | None = None,
        dropout_rate: float | None = None,
    ) -> Tensor:
        """Forecast a batch of single-channel series: (B, seq_len) -> (B, pred_len)."""
        xt = x if isinstance(x, Tensor) else Tensor(x)
        if xt.ndim != 2:
            raise ShapeError(f"forward_series expects (batch, seq_len), got {xt.shape}")
        if xt.shape[1] != self.cfg.seq_len:
            raise ShapeError(
                f"series length {xt.shape[1]} != configured seq_len {self.cfg.seq_len}"
            )
        rate = self.cfg.dropout if dropout_rate is None else dropout_rate
        if training and rate > 0.0 and rng is None:
            raise ConfigError("training-mode forward with dropout needs an rng")

        memory = patch_embed(xt, self.embedding, self.patching)
        memory = dropout(memory, rate, rng, training)
        for layer in self.encoder_layers:
            memory = encoder_layer(memory, layer, rate, rng, training)

        decoded = patch_embed(self.decoder_series(xt), self.embedding, self.patching)
        decoded = dropout(decoded, rate, rng, training)
        for layer in self.decoder_layers:
            decoded = decoder_layer(decoded, memory, layer, rate, rng, training)

        flat = decoded.reshape(xt.shape[0], self.z_decoder * self.cfg.d_model)
        return flat @ self.head_weight

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Forecast one multivariate window: (seq_len, C) -> (pred_len, C).

        Evaluation mode only.  Channels run through the network one at a time
        with identical weights, so permuting input channels permutes the
        output bit for bit.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape != (self.cfg.seq_len, self.cfg.n_channels):
            raise ShapeError(
                f"forward expects shape ({self.cfg.seq_len}, {self.cfg.n_channels}), "
                f"got {x.shape}"
            )
        with no_grad():
            columns = [
                self.forward_series(x[:, c][None, :]).data[0]
                for c in range(self.cfg.n_channels)
            ]
        return np.stack(columns, axis=1)

    def forward_batch(
        self,
        x: np.ndarray,
        training: bool = False,
        rng: Rng | None = None,
        dropout_rate: float | None = None,
    ) -> Tensor:
        """Forecast a batch of windows: (B, seq_len, C) -> Tensor (B, pred_len, C).

        Channels are folded into the batch axis and run in one pass, which
        keeps the graph small and the matmuls large.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] != self.cfg.seq_len or x.shape[2] != self.cfg.n_channels:
            raise ShapeError(
                f"forward_batch expects (B, {self.cfg.seq_len}, {self.cfg.n_channels}), "
                f"got {x.shape}"
            )
        b, _, c = x.shape
        folded = np.ascontiguousarray(np.transpose(x, (0, 2, 1))).reshape(b * c, -1)
        out = self.forward_series(folded, training=training, rng=rng, dropout_rate=dropout_rate)
        return out.reshape(b, c, self.cfg.pred_len).transpose((0, 2, 1))


@dataclass
class Checkpoint:
    """A model restored from disk plus the preprocessing state saved with it."""

    model: PatchformerModel
    scaler_mean: np.ndarray | None
    scaler_std: np.ndarray | None
    channel_names: list[str] | None
    extra: dict


def save_checkpoint(
    model: PatchformerModel,
    path,
    scaler_mean: np.ndarray | None = None,
    scaler_std: np.ndarray | None = None,
    channel_names: list[str] | None = None,
    extra: dict | None = None,
) -> Path:
    """Write weights, config, and scaler state to one ``.npz`` container."""
    if (scaler_mean is None) != (scaler_std is None):
        raise ConfigError("scaler_mean and scaler_std must be saved together")
    path = Path(path)
    if path.suffix != ".npz":
        path = Path(str(path) + ".npz")
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(model.cfg),
        "channel_names": list(channel_names) if channel_names is not None else None,
        "extra": extra or {},
    }
    arrays: dict[str, np.ndarray] = {
        f"param.{name}": tensor.data for name, tensor in model.store.items()
    }
    arrays["meta"] = np.array(json.dumps(meta))
    if scaler_mean is not None:
        arrays["scaler.mean"] = np.asarray(scaler_mean, dtype=np.float64)
        arrays["scaler.std"] = np.asarray(scaler_std, dtype=np.float64)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> Checkpoint:
    """Rebuild a model bit for bit from ``save_checkpoint`` output."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint file not found: {path}")
    with np.load(path, allow_pickle=False) as bundle:
        if "meta" not in bundle:
            raise DataError(f"{path} is not a model checkpoint (no meta entry)")
        meta = json.loads(str(bundle["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise DataError(
                f"unsupported checkpoint format {meta.get('format')!r} in {path}"
            )
        state = {
            key[len("param.") :]: bundle[key] for key in bundle.files if key.startswith("param.")
        }
        scaler_mean = bundle["scaler.mean"] if "scaler.mean" in bundle else None
        scaler_std = bundle["scaler.std"] if "scaler.std" in bundle else None
    cfg = ModelConfig(**meta["config"])
    model = PatchformerModel.build(cfg)
    model.store.load_state_dict(state)
    return Checkpoint(
        model=model,
        scaler_mean=scaler_mean,
        scaler_std=scaler_std,
        channel_names=meta.get("channel_names"),
        extra=meta.get("extra", {}),
    )
