"""Transformer EEG encoder.

Pipeline: per-channel standardization -> temporal patch embedding ->
attention across channels at each patch position (spatial stage) ->
channel pooling -> attention across patches (temporal stage) -> mean
pooling -> one linear projection head per caption category, each emitting
unit-norm embeddings in the caption space.

Pre-norm residual blocks with tanh-approximation GELU throughout.
"""

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import tensorfile
from .autodiff import Graph
from .errors import ConfigError, DimensionError
from .rng import SeedHub, truncated_normal

INIT_STD = 0.02
ZSCORE_EPS = 1e-8
LN_EPS = 1e-5


@dataclass
class EncoderConfig:
    channels: int
    samples: int
    proj_dim: int
    head_categories: tuple
    patch_len: int = 16
    d_model: int = 64
    n_spatial_layers: int = 2
    n_temporal_layers: int = 2
    n_attn_heads: int = 4
    ff_mult: int = 4
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.head_categories = tuple(self.head_categories)
        self.validate()

    def validate(self):
        if self.d_model % self.n_attn_heads != 0:
            raise ConfigError(
                f"d_model ({self.d_model}) must be divisible by n_attn_heads "
                f"({self.n_attn_heads})")
        if self.samples % self.patch_len != 0:
            raise ConfigError(
                f"samples ({self.samples}) must be divisible by patch_len "
                f"({self.patch_len})")
        if len(self.head_categories) != 10:
            raise ConfigError(
                f"expected 10 head categories, got {len(self.head_categories)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        for name, low in (("channels", 1), ("samples", 2), ("proj_dim", 2),
                          ("patch_len", 1), ("d_model", 1), ("n_spatial_layers", 0),
                          ("n_temporal_layers", 0), ("n_attn_heads", 1), ("ff_mult", 1)):
            if getattr(self, name) < low:
                raise ConfigError(f"{name} must be >= {low}")

    @property
    def n_patches(self) -> int:
        return self.samples // self.patch_len

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_attn_heads

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head_categories"] = list(self.head_categories)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        d = dict(d)
        d["head_categories"] = tuple(d["head_categories"])
        return cls(**d)


def _block_specs(prefix: str, cfg: EncoderConfig):
    d, f = cfg.d_model, cfg.ff_mult * cfg.d_model
    specs = [(f"{prefix}.ln1_g", (d,), "gamma"), (f"{prefix}.ln1_b", (d,), "bias")]
    for w in ("wq", "wk", "wv", "wo"):
        specs.append((f"{prefix}.attn_{w}", (d, d), "weight"))
    for b in ("bq", "bk", "bv", "bo"):
        specs.append((f"{prefix}.attn_{b}", (d,), "bias"))
    specs += [
        (f"{prefix}.ln2_g", (d,), "gamma"), (f"{prefix}.ln2_b", (d,), "bias"),
        (f"{prefix}.ff_w1", (d, f), "weight"), (f"{prefix}.ff_b1", (f,), "bias"),
        (f"{prefix}.ff_w2", (f, d), "weight"), (f"{prefix}.ff_b2", (d,), "bias"),
    ]
    return specs


def param_specs(cfg: EncoderConfig):
    """Ordered (name, shape, kind) for every learnable tensor."""
    c, d, p = cfg.channels, cfg.d_model, cfg.n_patches
    specs = [
        ("chan_embed", (c, d), "weight"),
        ("spatial_pos", (c, d), "weight"),
        ("temporal_pos", (p, d), "weight"),
        ("patch_proj_w", (cfg.patch_len, d), "weight"),
        ("patch_proj_b", (d,), "bias"),
    ]
    for i in range(cfg.n_spatial_layers):
        specs += _block_specs(f"spatial.{i}", cfg)
    specs += [("spatial_final_g", (d,), "gamma"), ("spatial_final_b", (d,), "bias")]
    for i in range(cfg.n_temporal_layers):
        specs += _block_specs(f"temporal.{i}", cfg)
    specs += [("temporal_final_g", (d,), "gamma"), ("temporal_final_b", (d,), "bias")]
    for name in cfg.head_categories:
        specs.append((f"head.{name}.w", (d, cfg.proj_dim), "weight"))
        specs.append((f"head.{name}.b", (cfg.proj_dim,), "bias"))
    return specs


def param_count(cfg: EncoderConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape, _ in param_specs(cfg))


def init_params(cfg: EncoderConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    """Weights ~ truncated normal (std 0.02), biases zero, norm scales one.

    Each parameter draws from its own named stream, so values are
    reproducible per seed and independent of initialization order.
    """
    hub = SeedHub(cfg.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape, kind in param_specs(cfg):
        if kind == "weight":
            arr = truncated_normal(hub.stream(f"init/{name}"), shape, INIT_STD)
        elif kind == "gamma":
            arr = np.ones(shape)
        else:
            arr = np.zeros(shape)
        params[name] = np.ascontiguousarray(arr, dtype=dtype)
    return params


def _attention_block(h, p, prefix, cfg: EncoderConfig, train_mode, drop_gen):
    nh, dk = cfg.n_attn_heads, cfg.head_dim
    n_seq, s, d = h.data.shape
    a = ad.layer_norm(h, p[f"{prefix}.ln1_g"], p[f"{prefix}.ln1_b"], eps=LN_EPS)
    q = ad.linear(a, p[f"{prefix}.attn_wq"], p[f"{prefix}.attn_bq"])
    k = ad.linear(a, p[f"{prefix}.attn_wk"], p[f"{prefix}.attn_bk"])
    v = ad.linear(a, p[f"{prefix}.attn_wv"], p[f"{prefix}.attn_bv"])
    q = ad.scale(q, 1.0 / np.sqrt(dk))  # cheaper than scaling the score matrix
    q = ad.transpose(ad.reshape(q, (n_seq, s, nh, dk)), (0, 2, 1, 3))
    k = ad.transpose(ad.reshape(k, (n_seq, s, nh, dk)), (0, 2, 1, 3))
    v = ad.transpose(ad.reshape(v, (n_seq, s, nh, dk)), (0, 2, 1, 3))
    scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2)))
    attn = ad.softmax(scores, axis=-1)
    if train_mode:
        attn = ad.dropout(attn, cfg.dropout, drop_gen)
    o = ad.matmul(attn, v)
    o = ad.reshape(ad.transpose(o, (0, 2, 1, 3)), (n_seq, s, d))
    o = ad.linear(o, p[f"{prefix}.attn_wo"], p[f"{prefix}.attn_bo"])
    if train_mode:
        o = ad.dropout(o, cfg.dropout, drop_gen)
    h = ad.add(h, o)
    f = ad.layer_norm(h, p[f"{prefix}.ln2_g"], p[f"{prefix}.ln2_b"], eps=LN_EPS)
    f = ad.gelu(ad.linear(f, p[f"{prefix}.ff_w1"], p[f"{prefix}.ff_b1"]))
    f = ad.linear(f, p[f"{prefix}.ff_w2"], p[f"{prefix}.ff_b2"])
    if train_mode:
        f = ad.dropout(f, cfg.dropout, drop_gen)
    return ad.add(h, f)


def encode_graph(x, params, cfg: EncoderConfig, train_mode=False, drop_gen=None):
    """Forward pass on an existing graph; returns {head name: Tensor (B, D)}.

    ``x`` is a (B, channels, samples) tensor node; ``params`` maps names to
    tensor nodes on the same graph.
    """
    b = x.data.shape[0]
    if x.data.shape[1:] != (cfg.channels, cfg.samples):
        raise DimensionError(
            f"batch shape {x.data.shape} does not match configured "
            f"({cfg.channels}, {cfg.samples})")
    if train_mode and cfg.dropout > 0.0 and drop_gen is None:
        raise ConfigError("train_mode with dropout needs a random generator")
    c, d, n_p, plen = cfg.channels, cfg.d_model, cfg.n_patches, cfg.patch_len

    h = ad.standardize(x, eps=ZSCORE_EPS)
    h = ad.reshape(h, (b, c, n_p, plen))
    h = ad.linear(h, params["patch_proj_w"], params["patch_proj_b"])
    spatial_mix = ad.reshape(ad.add(params["chan_embed"], params["spatial_pos"]),
                             (1, c, 1, d))
    h = ad.add(h, spatial_mix)
    if train_mode:
        h = ad.dropout(h, cfg.dropout, drop_gen)
    h = ad.reshape(ad.transpose(h, (0, 2, 1, 3)), (b * n_p, c, d))
    for i in range(cfg.n_spatial_layers):
        h = _attention_block(h, params, f"spatial.{i}", cfg, train_mode, drop_gen)
    h = ad.layer_norm(h, params["spatial_final_g"], params["spatial_final_b"], eps=LN_EPS)
    h = ad.mean(h, axis=1)
    h = ad.reshape(h, (b, n_p, d))
    h = ad.add(h, ad.reshape(params["temporal_pos"], (1, n_p, d)))
    if train_mode:
        h = ad.dropout(h, cfg.dropout, drop_gen)
    for i in range(cfg.n_temporal_layers):
        h = _attention_block(h, params, f"temporal.{i}", cfg, train_mode, drop_gen)
    h = ad.layer_norm(h, params["temporal_final_g"], params["temporal_final_b"], eps=LN_EPS)
    h = ad.mean(h, axis=1)

    heads = {}
    for name in cfg.head_categories:
        e = ad.linear(h, params[f"head.{name}.w"], params[f"head.{name}.b"])
        heads[name] = ad.l2_normalize(e, axis=1)
    return heads


def graph_params(graph: Graph, params: dict[str, np.ndarray], requires_grad: bool):
    return {name: graph.tensor(arr, requires_grad=requires_grad)
            for name, arr in params.items()}


def encode(batch: np.ndarray, params: dict, cfg: EncoderConfig,
           train_mode=False, drop_gen=None, dtype=np.float32):
    """Convenience forward pass; returns {head name: (B, D) array}."""
    g = Graph(dtype=dtype)
    x = g.constant(batch)
    p = graph_params(g, params, requires_grad=False)
    heads = encode_graph(x, p, cfg, train_mode=train_mode, drop_gen=drop_gen)
    return {name: t.data.copy() for name, t in heads.items()}


def encode_dataset(dataset, params: dict, cfg: EncoderConfig, batch_size=128,
                   dtype=np.float32):
    """Encode every epoch; returns {head name: (N, D) array}."""
    xs = dataset.stacked()
    outs = {name: [] for name in cfg.head_categories}
    for start in range(0, len(xs), batch_size):
        part = encode(xs[start:start + batch_size], params, cfg, dtype=dtype)
        for name, arr in part.items():
            outs[name].append(arr)
    return {name: np.concatenate(chunks) for name, chunks in outs.items()}


def encode_with_input_grad(batch: np.ndarray, params: dict, cfg: EncoderConfig,
                           loss_fn, dtype=np.float32):
    """Loss and its gradient with respect to the raw input batch.

    ``loss_fn(graph, heads)`` must return a scalar tensor on the same graph.
    """
    g = Graph(dtype=dtype)
    x = g.tensor(batch, requires_grad=True)
    p = graph_params(g, params, requires_grad=False)
    heads = encode_graph(x, p, cfg, train_mode=False)
    loss = loss_fn(g, heads)
    g.backward(loss)
    grad = x.grad if x.grad is not None else np.zeros_like(x.data)
    value = float(loss.data)
    g.release()
    return value, grad


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    config: EncoderConfig
    params: dict[str, np.ndarray]
    manifest: dict = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint, directory) -> None:
    """One directory: manifest.json plus one tensor file per parameter."""
    os.makedirs(directory, exist_ok=True)
    manifest = dict(ckpt.manifest)
    manifest["config"] = ckpt.config.to_dict()
    manifest["param_names"] = list(ckpt.params.keys())
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fp:
        json.dump(manifest, fp, indent=2, sort_keys=True)
        fp.write("\n")
    for name, arr in ckpt.params.items():
        tensorfile.save(os.path.join(directory, f"{name}.nsem"), arr)


def load_checkpoint(directory) -> Checkpoint:
    with open(os.path.join(directory, "manifest.json"), "r", encoding="utf-8") as fp:
        manifest = json.load(fp)
    config = EncoderConfig.from_dict(manifest["config"])
    params = {name: tensorfile.load(os.path.join(directory, f"{name}.nsem"))
              for name in manifest["param_names"]}
    return Checkpoint(config=config, params=params, manifest=manifest)
