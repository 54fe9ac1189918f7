"""Context-free and context-sensitive item encoders.

Evaluation items only ever pass through the context-free path; the
context-sensitive interface takes support embeddings exclusively.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ContractViolation, MissingEmbedding
from .model import ModelConfig
from .nn import lstm_cell, wn_linear


def encode_context_free(features, cfg: ModelConfig, p):
    """Embed a batch of raw items into (n, d) rows.

    ``features`` is a list: dense vectors for the mlp path, 2-D grayscale
    grids for the conv path, integer ids for the lookup path.
    """
    if cfg.encoder == "lookup":
        ids = np.asarray(features, dtype=np.int64)
        table = p["enc.table"]
        if ids.min() < 0 or ids.max() >= table.shape[0]:
            bad = ids[(ids < 0) | (ids >= table.shape[0])][0]
            raise MissingEmbedding(f"no embedding row for id {bad}")
        return table[ids]
    if cfg.encoder == "mlp":
        x = ad.Tensor(np.stack([np.asarray(f, dtype=np.float64) for f in features]))
        n_layers = 1 + len(cfg.mlp_hidden)
        for i in range(n_layers):
            x = ad.leaky_relu(wn_linear(x, p[f"enc.mlp{i}.v"], p[f"enc.mlp{i}.g"], p[f"enc.mlp{i}.b"]))
        return x
    return _encode_conv(features, cfg, p)


def _encode_conv(features, cfg, p):
    imgs = np.stack([np.asarray(f, dtype=np.float64) for f in features])
    if imgs.ndim != 3 or imgs.shape[1] != imgs.shape[2]:
        raise ContractViolation("conv encoder expects square grayscale grids")
    x = ad.Tensor(imgs[:, None, :, :])
    x = ad.leaky_relu(ad.conv2d(x, p["enc.conv0.w"], p["enc.conv0.b"], stride=2, padding=2))
    x = ad.leaky_relu(ad.conv2d(x, p["enc.conv1.w"], p["enc.conv1.b"], stride=2, padding=2))
    x = ad.leaky_relu(ad.conv2d(x, p["enc.conv2.w"], p["enc.conv2.b"], stride=1, padding=1))
    x = ad.reshape(x, (imgs.shape[0], -1))
    return wn_linear(x, p["enc.fc.v"], p["enc.fc.g"], p["enc.fc.b"])


def conv_feature_map(features, cfg: ModelConfig, p):
    """Pre-flatten activations of the conv stack (for shape diagnostics)."""
    imgs = np.stack([np.asarray(f, dtype=np.float64) for f in features])
    x = ad.Tensor(imgs[:, None, :, :])
    x = ad.leaky_relu(ad.conv2d(x, p["enc.conv0.w"], p["enc.conv0.b"], stride=2, padding=2))
    x = ad.leaky_relu(ad.conv2d(x, p["enc.conv1.w"], p["enc.conv1.b"], stride=2, padding=2))
    return ad.leaky_relu(ad.conv2d(x, p["enc.conv2.w"], p["enc.conv2.b"], stride=1, padding=1))


def visitation_order(n, order_seed):
    """The per-episode random order in which the support pool is traversed."""
    return np.random.default_rng(order_seed).permutation(n)


def encode_context_sensitive(x_prime, cfg: ModelConfig, p, order):
    """Refine support embeddings with a bidirectional recurrent pass.

    The forward LSTM walks the pool in ``order``; the backward LSTM walks
    the concatenated (embedding, forward state) sequence in reverse.  Each
    item gets ``x'' = x' + W_e [fwd; bwd]``.  Also returns the backward
    LSTM's final state, used to seed the controller.
    """
    n = x_prime.shape[0]
    if n == 0:
        raise ContractViolation("context-sensitive encoding needs a nonempty support set")
    d = cfg.embed_dim
    h = ad.Tensor(np.zeros((1, d)))
    c = ad.Tensor(np.zeros((1, d)))
    fwd = [None] * n
    for i in order:
        h, c = lstm_cell(x_prime[np.array([i])], h, c, p, "ctx.fwd", layer_norm_on=cfg.layer_norm)
        fwd[i] = h
    h = ad.Tensor(np.zeros((1, d)))
    c = ad.Tensor(np.zeros((1, d)))
    bwd = [None] * n
    for i in order[::-1]:
        step_in = ad.concat([x_prime[np.array([i])], fwd[i]], axis=1)
        h, c = lstm_cell(step_in, h, c, p, "ctx.bwd", layer_norm_on=cfg.layer_norm)
        bwd[i] = h
    back_final = h
    states = ad.concat(
        [ad.concat([fwd[i], bwd[i]], axis=1) for i in range(n)], axis=0
    )
    x_ctx = x_prime + wn_linear(states, p["ctx.we.v"], p["ctx.we.g"], p["ctx.we.b"])
    return x_ctx, back_final
