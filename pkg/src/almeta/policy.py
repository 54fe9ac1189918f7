"""Active-learning decision loop internals: reading a labeled item,
updating the recurrent controller, and selecting the next item to label."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractViolation, PoolExhausted
from .model import ModelConfig, N_PAIR_FEATURES, encode_label
from .nn import lstm_cell, wn_linear

_FEATURE_BIG = 1e4  # dwarfs any cosine; masks the diagonal in max/min stats


@dataclass
class SupportPartition:
    """Index sets of labeled and unlabeled support items."""

    known: list = field(default_factory=list)
    unknown: list = field(default_factory=list)

    @classmethod
    def fresh(cls, n):
        return cls(known=[], unknown=list(range(n)))

    def reveal(self, idx):
        if idx not in self.unknown:
            raise ContractViolation(f"item {idx} is not in the unknown set")
        self.unknown.remove(idx)
        self.known.append(idx)

    def snapshot(self):
        return SupportPartition(known=list(self.known), unknown=list(self.unknown))


@dataclass
class SelectionDistribution:
    probs: object  # Tensor over the unknown set
    unknown: tuple  # support indices the probabilities refer to
    gate: object
    features: object  # per-item feature rows d_i

    def entropy(self):
        p = self.probs
        return -ad.tsum(p * ad.log(ad.clip_min(p, 1e-12)))


def read(cfg: ModelConfig, p, x_ctx_row, label):
    """Transform (embedding, label) into the controller input r_t."""
    enc = ad.Tensor(encode_label(cfg, label).reshape(1, -1))
    joined = ad.concat([x_ctx_row, enc], axis=1)
    return wn_linear(joined, p["read.v"], p["read.g"], p["read.b"])


def initial_control_state(cfg: ModelConfig, p, encoder_back_state):
    """h0 is a learned map of the backward encoder's final state; memory starts at zero."""
    h0 = wn_linear(encoder_back_state, p["ctrl.h0.v"], p["ctrl.h0.g"], p["ctrl.h0.b"])
    c0 = ad.Tensor(np.zeros((1, cfg.hidden_dim)))
    return h0, c0


def controller_update(cfg: ModelConfig, p, state, r_t):
    h, c = state
    return lstm_cell(r_t, h, c, p, "ctrl.lstm", layer_norm_on=cfg.layer_norm)


def item_item_features(sim, partition: SupportPartition):
    """Six similarity statistics per unknown item.

    Columns: [max, mean, min] cosine to labeled items, then [max, mean, min]
    cosine to the other unlabeled items.  Empty comparison sets (no labels
    yet, or no unlabeled peer) contribute zeros.
    """
    unknown = np.asarray(partition.unknown)
    m = len(unknown)
    cols = []
    if partition.known:
        known = np.asarray(partition.known)
        s_uk = sim[unknown[:, None], known[None, :]]
        cols += [
            ad.tmax(s_uk, axis=1, keepdims=True),
            ad.tmean(s_uk, axis=1, keepdims=True),
            ad.tmin(s_uk, axis=1, keepdims=True),
        ]
    else:
        cols.append(ad.Tensor(np.zeros((m, 3))))
    if m > 1:
        s_uu = sim[unknown[:, None], unknown[None, :]]
        eye = np.eye(m)
        diag = s_uu[np.arange(m), np.arange(m)]
        cols += [
            ad.tmax(s_uu - _FEATURE_BIG * eye, axis=1, keepdims=True),
            ad.reshape((ad.tsum(s_uu, axis=1) - diag) * (1.0 / (m - 1)), (m, 1)),
            ad.tmin(s_uu + _FEATURE_BIG * eye, axis=1, keepdims=True),
        ]
    else:
        cols.append(ad.Tensor(np.zeros((m, 3))))
    return ad.concat(cols, axis=1)


def select(cfg: ModelConfig, p, partition, x_ctx, sim, h_t, mode, rng):
    """Place a distribution over the unknown set and pick an item.

    Returns (support index, SelectionDistribution, log-prob Tensor of the
    chosen entry).  ``mode`` is "sample" or "argmax" (ties to lowest index).
    """
    if not partition.unknown:
        raise PoolExhausted("no unlabeled support items remain")
    unknown = np.asarray(partition.unknown)
    x_u = x_ctx[unknown]
    ctrl_dir = wn_linear(h_t, p["sel.wb.v"], p["sel.wb.g"], p["sel.wb.b"])
    b_feats = x_u * ctrl_dir
    pair_feats = item_item_features(sim, partition)
    d_feats = ad.concat([b_feats, pair_feats], axis=1)
    gate = ad.sigmoid(wn_linear(h_t, p["sel.wg.v"], p["sel.wg.g"], p["sel.wg.b"]))
    logits = wn_linear(d_feats * gate, p["sel.wp.v"], p["sel.wp.g"], p["sel.wp.b"])
    probs = ad.softmax(ad.reshape(logits, (-1,)))
    dist = SelectionDistribution(probs=probs, unknown=tuple(int(i) for i in unknown), gate=gate, features=d_feats)
    if mode == "argmax":
        pos = int(np.argmax(probs.data))
    elif mode == "sample":
        pv = np.asarray(probs.data, dtype=np.float64)
        pos = int(rng.choice(len(pv), p=pv / pv.sum()))
    else:
        raise ContractViolation(f"unknown selection mode '{mode}'")
    log_prob = ad.log(ad.clip_min(probs[np.array([pos])], 1e-12))
    chosen = int(unknown[pos])
    assert chosen not in partition.known
    return chosen, dist, ad.reshape(log_prob, ())
