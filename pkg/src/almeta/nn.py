"""Neural-net building blocks on top of the autodiff tape.

All free-standing linear maps use the weight-norm parametrization
(direction matrix v, per-row gain g, bias b).  LSTM cells keep plain
weight matrices and get layer normalization on their pre-activations
instead.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractViolation, NumericFault

COSINE_EPS = 1e-8
LAYER_NORM_EPS = 1e-5
WN_EPS = 1e-12


class ParamStore:
    """Named trainable arrays plus helpers for building a fresh tape view."""

    def __init__(self, dtype=np.float32):
        self.params: dict[str, np.ndarray] = {}
        self.dtype = np.dtype(dtype).type

    def add(self, name, array):
        self.params[name] = np.asarray(array, dtype=self.dtype)
        return self.params[name]

    def add_wn(self, name, out_dim, in_dim, rng, scale=0.05):
        """Weight-normed linear: v direction, g gain (init so W == v), b bias."""
        v = rng.normal(0.0, scale, size=(out_dim, in_dim))
        self.add(f"{name}.v", v)
        self.add(f"{name}.g", np.linalg.norm(v, axis=1))
        self.add(f"{name}.b", np.zeros(out_dim))

    def add_lstm(self, name, in_dim, hidden, rng, layer_norm=True):
        sx = 1.0 / np.sqrt(in_dim)
        sh = 1.0 / np.sqrt(hidden)
        self.add(f"{name}.wx", rng.normal(0.0, sx, size=(4 * hidden, in_dim)))
        self.add(f"{name}.wh", rng.normal(0.0, sh, size=(4 * hidden, hidden)))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0  # forget-gate bias
        self.add(f"{name}.b", b)
        if layer_norm:
            self.add(f"{name}.lnx.g", np.ones(4 * hidden))
            self.add(f"{name}.lnx.b", np.zeros(4 * hidden))
            self.add(f"{name}.lnh.g", np.ones(4 * hidden))
            self.add(f"{name}.lnh.b", np.zeros(4 * hidden))

    def tensors(self) -> dict[str, Tensor]:
        """Fresh gradient-requiring Tensor view for one tape."""
        return {k: Tensor(v, requires_grad=True, name=k) for k, v in self.params.items()}

    @staticmethod
    def grads(tensors: dict[str, Tensor]) -> dict[str, np.ndarray]:
        """Gradient map after backward; parameters untouched by the loss map to zero."""
        return {
            k: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for k, t in tensors.items()
        }

    def copy(self):
        out = ParamStore(self.dtype)
        for k, v in self.params.items():
            out.params[k] = v.copy()
        return out


def wn_linear(x, v, g, b):
    """Weight-normalized affine map: per-row ``g * (v.x)/|v| + b``.

    ``x`` may be a single vector ``(in,)`` or a batch ``(B, in)``.
    """
    x, v, g, b = map(ad.as_tensor, (x, v, g, b))
    norms_sq = ad.tsum(v * v, axis=1)
    if np.any(norms_sq.data < WN_EPS * WN_EPS):
        raise NumericFault("wn_linear: near-zero direction row")
    scale = g / ad.sqrt(norms_sq)
    single = x.ndim == 1
    if single:
        x = ad.reshape(x, (1, -1))
    y = ad.matmul(x, v.T) * scale + b
    return ad.reshape(y, (-1,)) if single else y


def layer_norm(x, gain, bias, eps=LAYER_NORM_EPS):
    """Normalize the last axis to zero mean / unit variance, then rescale."""
    x = ad.as_tensor(x)
    mu = ad.tmean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = ad.tmean(xc * xc, axis=-1, keepdims=True)
    return gain * (xc / ad.sqrt(var + eps)) + bias


def lstm_cell(x, h_prev, c_prev, p, prefix, layer_norm_on=True):
    """One LSTM step (gate order i, f, g, o), batch-first 2-D inputs.

    Layer norm, when on, is applied separately to the input-to-hidden and
    hidden-to-hidden pre-activation sums.
    """
    x, h_prev, c_prev = map(ad.as_tensor, (x, h_prev, c_prev))
    if x.ndim != 2 or h_prev.ndim != 2 or c_prev.ndim != 2:
        raise ContractViolation("lstm_cell expects 2-D (batch, dim) inputs")
    hidden = h_prev.shape[1]
    px = ad.matmul(x, p[f"{prefix}.wx"].T)
    ph = ad.matmul(h_prev, p[f"{prefix}.wh"].T)
    if layer_norm_on:
        px = layer_norm(px, p[f"{prefix}.lnx.g"], p[f"{prefix}.lnx.b"])
        ph = layer_norm(ph, p[f"{prefix}.lnh.g"], p[f"{prefix}.lnh.b"])
    pre = px + ph + p[f"{prefix}.b"]
    i = ad.sigmoid(pre[:, :hidden])
    f = ad.sigmoid(pre[:, hidden : 2 * hidden])
    gc = ad.tanh(pre[:, 2 * hidden : 3 * hidden])
    o = ad.sigmoid(pre[:, 3 * hidden :])
    c = f * c_prev + i * gc
    h = o * ad.tanh(c)
    return h, c


def cosine_sim(a, b, eps=COSINE_EPS):
    """Cosine similarity of two vectors with a zero-norm guard."""
    a, b = ad.as_tensor(a), ad.as_tensor(b)
    na = ad.clip_min(ad.sqrt(ad.tsum(a * a)), eps)
    nb = ad.clip_min(ad.sqrt(ad.tsum(b * b)), eps)
    return ad.tsum(a * b) / (na * nb)


def cosine_rows(x, eps=COSINE_EPS):
    """Rows of ``x`` scaled to unit norm (zero rows stay zero via the guard)."""
    x = ad.as_tensor(x)
    norms = ad.clip_min(ad.sqrt(ad.tsum(x * x, axis=1, keepdims=True)), eps)
    return x / norms


def cosine_matrix(x, eps=COSINE_EPS):
    """Pairwise cosine similarities between the rows of ``x``."""
    xn = cosine_rows(x, eps)
    return ad.matmul(xn, xn.T)


def cosine_cross(a, b, eps=COSINE_EPS):
    """Cosine similarities between every row of ``a`` and every row of ``b``."""
    return ad.matmul(cosine_rows(a, eps), cosine_rows(b, eps).T)
