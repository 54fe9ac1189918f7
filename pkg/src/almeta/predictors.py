"""Fast within-pool prediction, slow matching-style prediction for held-out
items, and reward computation."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ContractViolation, NoEvidence
from .model import ModelConfig, attention_label
from .nn import cosine_cross, lstm_cell, wn_linear

LOG_FLOOR = 1e-12


def known_label_matrix(cfg: ModelConfig, episode, known):
    """Rows of attention-ready label vectors for the revealed support items."""
    return np.stack([attention_label(cfg, episode.support[j].label) for j in known])


def fast_predict(cfg: ModelConfig, p, sim, x_ctx, partition, h_t):
    """Attention over labeled items, sharpened by a state-dependent score.

    Returns predictions for every unknown item: class distributions
    ``(m, N)`` for classification, ratings ``(m, 1)`` for regression.
    ``labels_known`` must align with ``partition.known``.
    """
    if not partition.known:
        raise NoEvidence("fast prediction needs at least one revealed label")
    unknown = np.asarray(partition.unknown)
    known = np.asarray(partition.known)
    gamma_dir = wn_linear(h_t, p["fast.wgamma.v"], p["fast.wgamma.g"], p["fast.wgamma.b"])
    x_u = x_ctx[unknown]
    gamma = ad.exp(ad.matmul(x_u, gamma_dir.T))  # (m, 1), positive
    s_uk = sim[unknown[:, None], known[None, :]]
    attn = ad.softmax(gamma * s_uk, axis=1)
    return attn


def fast_predictions(cfg, p, sim, x_ctx, partition, h_t, labels_known):
    attn = fast_predict(cfg, p, sim, x_ctx, partition, h_t)
    return ad.matmul(attn, ad.Tensor(labels_known))


def slow_predict(cfg: ModelConfig, p, x_eval, x_known, labels_known, h_t, steps=None):
    """Iterative matching prediction for held-out items.

    Each of ``steps`` iterations refines a match-sensitive embedding with an
    LSTM over the previous attention read-out, then attends over the labeled
    support items by cosine similarity.  Returns (predictions, final
    attention weights); predictions are convex combinations of the revealed
    label vectors.
    """
    if labels_known.shape[0] == 0:
        raise NoEvidence("slow prediction needs at least one revealed label")
    steps = cfg.match_steps if steps is None else steps
    if steps < 1:
        raise ContractViolation("slow prediction needs at least one matching step")
    n_eval = x_eval.shape[0]
    ones = ad.Tensor(np.ones((n_eval, 1)))
    h_tile = ad.matmul(ones, h_t)
    mh = ad.Tensor(np.zeros((n_eval, cfg.match_hidden)))
    mc = ad.Tensor(np.zeros((n_eval, cfg.match_hidden)))
    x_read = ad.Tensor(np.zeros((n_eval, cfg.embed_dim)))
    labels = ad.as_tensor(labels_known)
    attn = None
    for _ in range(steps):
        inp = ad.concat([x_read, x_eval, h_tile], axis=1)
        mh, mc = lstm_cell(inp, mh, mc, p, "slow.lstm", layer_norm_on=cfg.layer_norm)
        x_match = x_eval + wn_linear(mh, p["slow.wm.v"], p["slow.wm.g"], p["slow.wm.b"])
        attn = ad.softmax(cosine_cross(x_match, x_known), axis=1)
        x_read = ad.matmul(attn, x_known)
        y_read = ad.matmul(attn, labels)
    return y_read, attn


def reward(predictions, truths, kind):
    """Per-item reward terms plus their mean.

    Classification: log-probability of the true class (floored at
    ``log(1e-12)``); regression: negative squared error, with RMSE reported
    alongside.
    """
    preds = np.asarray(predictions, dtype=np.float64)
    if kind == "classification":
        truths = np.asarray(truths, dtype=np.int64)
        if truths.min() < 0 or truths.max() >= preds.shape[1]:
            raise ContractViolation("class index out of range")
        terms = np.log(np.maximum(preds[np.arange(len(truths)), truths], LOG_FLOOR))
        return {"terms": terms, "mean": float(terms.mean())}
    truths = np.asarray(truths, dtype=np.float64)
    terms = -((preds.reshape(-1) - truths) ** 2)
    return {"terms": terms, "mean": float(terms.mean()), "rmse": float(np.sqrt(-terms.mean()))}


def reward_tensor(cfg: ModelConfig, predictions, truths):
    """Differentiable mean reward matching ``reward``; actions stay constant."""
    if cfg.task == "classification":
        idx = np.asarray(truths, dtype=np.int64)
        picked = predictions[np.arange(len(idx)), idx]
        return ad.tmean(ad.log(ad.clip_min(picked, LOG_FLOOR)))
    y = np.asarray(truths, dtype=np.float64)
    diff = ad.reshape(predictions, (-1,)) - y
    return -ad.tmean(diff * diff)
