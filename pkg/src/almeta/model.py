"""Model configuration and parameter construction.

All trainable tensors for the active learner live in one ``ParamStore``;
the forward functions in ``encoders``, ``policy`` and ``predictors`` pull
what they need from a tape view of that store by name.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError
from .nn import ParamStore

N_PAIR_FEATURES = 6  # [max|mean|min] cosine to labeled and to unlabeled items


@dataclass
class ModelConfig:
    task: str = "classification"  # or "regression"
    n_classes: int = 5
    rating_min: float = 0.5
    rating_max: float = 5.0
    encoder: str = "mlp"  # mlp | lookup | conv
    input_dim: int = 16
    mlp_hidden: tuple = ()
    vocab_size: int = 0
    image_size: int = 28
    embed_dim: int = 64
    hidden_dim: int = 64
    match_hidden: int = 64
    match_steps: int = 3
    layer_norm: bool = True
    dtype: str = "float32"

    @property
    def label_dim(self):
        return self.n_classes if self.task == "classification" else 1

    def validate(self):
        if self.task not in ("classification", "regression"):
            raise ConfigurationError(f"unknown task kind '{self.task}'")
        if self.encoder not in ("mlp", "lookup", "conv"):
            raise ConfigurationError(f"unknown encoder kind '{self.encoder}'")
        if self.encoder == "lookup" and self.vocab_size <= 0:
            raise ConfigurationError("lookup encoder needs vocab_size > 0")
        if self.task == "classification" and self.n_classes < 2:
            raise ConfigurationError("classification needs n_classes >= 2")
        return self

    def to_dict(self):
        d = asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["mlp_hidden"] = tuple(d.get("mlp_hidden", ()))
        return cls(**d).validate()

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def encode_label(cfg: ModelConfig, label):
    """Label vector fed to the read module: one-hot, or rating mapped to [-1, 1]."""
    if cfg.task == "classification":
        v = np.zeros(cfg.n_classes)
        v[int(label)] = 1.0
        return v
    lo, hi = cfg.rating_min, cfg.rating_max
    return np.array([2.0 * (float(label) - lo) / (hi - lo) - 1.0])


def attention_label(cfg: ModelConfig, label):
    """Label vector combined by attention: one-hot, or the raw rating value."""
    if cfg.task == "classification":
        v = np.zeros(cfg.n_classes)
        v[int(label)] = 1.0
        return v
    return np.array([float(label)])


def init_params(cfg: ModelConfig, rng, pretrained_embeddings=None) -> ParamStore:
    """Build every trainable tensor the model needs, with fresh init."""
    cfg.validate()
    store = ParamStore(dtype=np.dtype(cfg.dtype).type)
    d, H, M, L = cfg.embed_dim, cfg.hidden_dim, cfg.match_hidden, cfg.label_dim

    # context-free encoder
    if cfg.encoder == "lookup":
        if pretrained_embeddings is not None:
            table = np.asarray(pretrained_embeddings)
            if table.shape != (cfg.vocab_size, d):
                raise ConfigurationError(
                    f"pretrained table shape {table.shape} != ({cfg.vocab_size}, {d})"
                )
        else:
            table = rng.normal(0.0, 0.05, size=(cfg.vocab_size, d))
        store.add("enc.table", table)
    elif cfg.encoder == "mlp":
        dims = [cfg.input_dim, *cfg.mlp_hidden, d]
        for i in range(len(dims) - 1):
            store.add_wn(f"enc.mlp{i}", dims[i + 1], dims[i], rng, scale=0.3)
    else:  # conv
        store.add("enc.conv0.w", rng.normal(0.0, 0.1, size=(64, 1, 5, 5)))
        store.add("enc.conv0.b", np.zeros(64))
        store.add("enc.conv1.w", rng.normal(0.0, 0.05, size=(64, 64, 5, 5)))
        store.add("enc.conv1.b", np.zeros(64))
        store.add("enc.conv2.w", rng.normal(0.0, 0.05, size=(64, 64, 3, 3)))
        store.add("enc.conv2.b", np.zeros(64))
        fmap = cfg.image_size // 4
        store.add_wn("enc.fc", d, fmap * fmap * 64, rng, scale=0.02)

    # context-sensitive bidirectional encoder
    store.add_lstm("ctx.fwd", d, d, rng, cfg.layer_norm)
    store.add_lstm("ctx.bwd", 2 * d, d, rng, cfg.layer_norm)
    store.add_wn("ctx.we", d, 2 * d, rng)

    # reading + controller
    store.add_wn("read", d, d + L, rng)
    store.add_lstm("ctrl.lstm", d, H, rng, cfg.layer_norm)
    store.add_wn("ctrl.h0", H, d, rng)

    # selection
    store.add_wn("sel.wb", d, H, rng)
    store.add_wn("sel.wg", d + N_PAIR_FEATURES, H, rng)
    store.add_wn("sel.wp", 1, d + N_PAIR_FEATURES, rng)

    # fast prediction sharpening
    store.add_wn("fast.wgamma", d, H, rng)

    # slow (matching-network) prediction
    store.add_lstm("slow.lstm", 2 * d + H, M, rng, cfg.layer_norm)
    store.add_wn("slow.wm", d, M, rng)

    # value head for advantage estimation
    store.add_wn("value", 1, H, rng)
    return store
