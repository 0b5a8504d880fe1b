"""Layer building blocks assembled from the tensor primitives."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

MASK_VALUE = -1e9


def uniform_init(rng, shape, scale=0.05):
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


def glorot_init(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape or (fan_in, fan_out)), requires_grad=True)


def zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape):
    return Tensor(np.ones(shape), requires_grad=True)


def linear(x, w, b=None):
    y = T.matmul(x, w)
    return y if b is None else T.add(y, b)


def gru_params(rng, d_in, d_h, prefix=""):
    """Fused GRU weights: columns ordered (update, reset, candidate)."""
    return {
        f"{prefix}W": glorot_init(rng, d_in, d_h, shape=(d_in, 3 * d_h)),
        f"{prefix}U": glorot_init(rng, d_h, d_h, shape=(d_h, 3 * d_h)),
        f"{prefix}b": zeros((3 * d_h,)),
    }


def gru_cell(x, h, params, prefix=""):
    """One GRU step, composed from elementary primitives.

    z = sigmoid(W_z x + U_z h + b_z), r = sigmoid(W_r x + U_r h + b_r),
    n = tanh(W_n x + r * (U_n h) + b_n), h' = (1 - z) * n + z * h.
    """
    U = params[f"{prefix}U"]
    d = U.shape[0]
    if h.shape[-1] != d:
        raise ValueError("gru shape mismatch")
    xw = linear(x, params[f"{prefix}W"], params[f"{prefix}b"])
    hu = T.matmul(h, U)
    z = T.sigmoid(xw[..., :d] + hu[..., :d])
    r = T.sigmoid(xw[..., d:2 * d] + hu[..., d:2 * d])
    n = T.tanh(xw[..., 2 * d:] + r * hu[..., 2 * d:])
    return (1.0 - z) * n + z * h


def gru_layer(x, mask, params, prefix=""):
    """Run a GRU over ``x`` (B, T, d_in) from a zero state.

    ``mask`` (B, T) marks real positions; the state is carried unchanged over
    padded positions, so left padding is exactly equivalent to no padding.
    Returns the list of per-step states, each (B, d_h).
    """
    U = params[f"{prefix}U"]
    B, steps = mask.shape
    xw = linear(x, params[f"{prefix}W"], params[f"{prefix}b"])
    h = Tensor(np.zeros((B, U.shape[0])))
    m = mask.astype(np.float64)[:, :, None]
    states = []
    for t in range(steps):
        carry = None if m[:, t].all() else m[:, t]
        h = T.gru_step(xw[:, t], h, U, carry)
        states.append(h)
    return states


def gru_stack(x, mask, params, n_layers, dropout_p, train, rng):
    """Stacked GRU with dropout between layers; returns top-layer states."""
    states = None
    for layer in range(n_layers):
        if layer > 0:
            x = T.dropout(T.stack(states, axis=1), dropout_p, train, rng)
        states = gru_layer(x, mask, params, prefix=f"gru{layer}.")
    return states


def attention_params(rng, width, prefix):
    p = {}
    for name in ("q", "k", "v", "o"):
        p[f"{prefix}W{name}"] = glorot_init(rng, width, width)
        p[f"{prefix}b{name}"] = zeros((width,))
    return p


def block_params(rng, width, prefix):
    p = attention_params(rng, width, prefix + "attn.")
    p[f"{prefix}ln1.g"] = ones((width,))
    p[f"{prefix}ln1.b"] = zeros((width,))
    p[f"{prefix}ln2.g"] = ones((width,))
    p[f"{prefix}ln2.b"] = zeros((width,))
    p[f"{prefix}ff.W1"] = glorot_init(rng, width, width)
    p[f"{prefix}ff.b1"] = zeros((width,))
    p[f"{prefix}ff.W2"] = glorot_init(rng, width, width)
    p[f"{prefix}ff.b2"] = zeros((width,))
    return p


def affine_norm(x, params, prefix):
    return T.add(T.mul(T.layer_norm(x), params[prefix + ".g"]), params[prefix + ".b"])


def multi_head_attention(x, blocked, params, prefix, heads, dropout_p, train, rng):
    """Scaled dot-product self-attention.

    ``blocked`` is a boolean (B, T, T) array, true where query i may not look
    at key j.
    """
    B, steps, width = x.shape
    d = width // heads

    def split(t):
        return T.transpose(T.reshape(t, (B, steps, heads, d)), (0, 2, 1, 3))

    q = split(linear(x, params[prefix + "Wq"], params[prefix + "bq"]))
    k = split(linear(x, params[prefix + "Wk"], params[prefix + "bk"]))
    v = split(linear(x, params[prefix + "Wv"], params[prefix + "bv"]))
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(d))
    scores = T.masked_fill(scores, blocked[:, None, :, :], MASK_VALUE)
    att = T.dropout(T.softmax(scores, axis=-1), dropout_p, train, rng)
    out = T.reshape(T.transpose(T.matmul(att, v), (0, 2, 1, 3)), (B, steps, width))
    return linear(out, params[prefix + "Wo"], params[prefix + "bo"])


def encoder_block(x, blocked, valid, params, prefix, heads, activation, dropout_p, train, rng):
    """Pre-norm transformer block: attention and point-wise feed-forward, each residual."""
    act = T.relu if activation == "relu" else T.tanh
    h = affine_norm(x, params, prefix + "ln1")
    h = multi_head_attention(h, blocked, params, prefix + "attn.", heads, dropout_p, train, rng)
    x = T.add(x, T.dropout(h, dropout_p, train, rng))
    h = affine_norm(x, params, prefix + "ln2")
    h = act(linear(h, params[prefix + "ff.W1"], params[prefix + "ff.b1"]))
    h = linear(T.dropout(h, dropout_p, train, rng), params[prefix + "ff.W2"], params[prefix + "ff.b2"])
    x = T.add(x, T.dropout(h, dropout_p, train, rng))
    return T.mul(x, valid[:, :, None].astype(np.float64))
