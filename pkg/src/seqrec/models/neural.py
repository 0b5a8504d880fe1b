"""Neural next-item models on the autodiff core.

Every model maps a left-padded token batch ``(B, T)`` to item logits
``(B, n)`` for the next purchase (``next_logits``).  SASRec and BERT4Rec
additionally expose per-position hidden states for their own training
objectives.
"""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops as T
from ..autodiff import nn
from .base import PAD, multi_hot_batch


def _positions(mask):
    # position 0 is the first real token, so the amount of left padding is irrelevant
    return np.maximum(np.cumsum(mask, axis=1) - 1, 0)


class NeuralModel:
    kind = "neural"
    defaults: dict = {}

    def __init__(self, n_items, max_len, config=None, seed=0):
        self.n_items = int(n_items)
        self.max_len = int(max_len)
        self.config = {**self.defaults, **(config or {})}
        rng = np.random.Generator(np.random.Philox(seed))
        self.params = self.init_params(rng)

    def init_params(self, rng) -> dict:
        raise NotImplementedError

    def next_logits(self, tokens, mask, train=False, rng=None) -> Tensor:
        raise NotImplementedError

    def n_parameters(self):
        return sum(p.data.size for p in self.params.values())


class LogisticRegression(NeuralModel):
    """One sigmoid classifier per item over the multi-hot prefix set."""

    kind = "lr"

    def init_params(self, rng):
        n = self.n_items
        return {"W": nn.glorot_init(rng, n, n), "b": nn.zeros((n,))}

    def forward(self, v) -> Tensor:
        """Per-item logits; ``sigmoid`` of these are the classifier probabilities."""
        return nn.linear(v, self.params["W"], self.params["b"])

    def predict_proba(self, v) -> np.ndarray:
        return T.sigmoid(self.forward(v)).data

    def next_logits(self, tokens, mask, train=False, rng=None):
        return self.forward(multi_hot_batch(tokens, self.n_items))


class MLP(NeuralModel):
    kind = "mlp"
    defaults = {"hidden_size": 256, "n_layers": 3}

    def init_params(self, rng):
        n, h = self.n_items, self.config["hidden_size"]
        p = {}
        d_in = n
        for layer in range(self.config["n_layers"]):
            p[f"W{layer}"] = nn.glorot_init(rng, d_in, h)
            p[f"b{layer}"] = nn.zeros((h,))
            d_in = h
        p["W_out"] = nn.glorot_init(rng, d_in, n)
        p["b_out"] = nn.zeros((n,))
        return p

    def forward(self, v) -> Tensor:
        x = v
        for layer in range(self.config["n_layers"]):
            x = T.relu(nn.linear(x, self.params[f"W{layer}"], self.params[f"b{layer}"]))
        return nn.linear(x, self.params["W_out"], self.params["b_out"])

    def next_logits(self, tokens, mask, train=False, rng=None):
        return self.forward(multi_hot_batch(tokens, self.n_items))


class GRU(NeuralModel):
    kind = "gru"
    defaults = {"emb_size": 64, "cell_size": 128, "n_layers": 2, "dropout": 0.1}

    def init_params(self, rng):
        c = self.config
        p = {"E": nn.uniform_init(rng, (self.n_items + 1, c["emb_size"]))}
        d_in = c["emb_size"]
        for layer in range(c["n_layers"]):
            p.update(nn.gru_params(rng, d_in, c["cell_size"], prefix=f"gru{layer}."))
            d_in = c["cell_size"]
        p["W_out"] = nn.glorot_init(rng, c["cell_size"], self.n_items)
        p["b_out"] = nn.zeros((self.n_items,))
        return p

    def next_logits(self, tokens, mask, train=False, rng=None):
        c = self.config
        x = T.dropout(T.embedding_gather(self.params["E"], tokens), c["dropout"], train, rng)
        states = nn.gru_stack(x, mask, self.params, c["n_layers"], c["dropout"], train, rng)
        return nn.linear(states[-1], self.params["W_out"], self.params["b_out"])


class NARM(NeuralModel):
    """Shared GRU encoder; global = last state, local = attention-weighted states.

    Items are scored bilinearly: ``score(i) = emb(i) . (B [c_global; c_local])``.
    """

    kind = "narm"
    defaults = {"emb_size": 32, "enc_size": 80, "n_layers": 1, "ctx_dropout": 0.2, "emb_dropout": 0.15}

    def init_params(self, rng):
        c = self.config
        h = c["enc_size"]
        p = {"E": nn.uniform_init(rng, (self.n_items + 1, c["emb_size"]))}
        d_in = c["emb_size"]
        for layer in range(c["n_layers"]):
            p.update(nn.gru_params(rng, d_in, h, prefix=f"gru{layer}."))
            d_in = h
        p["A1"] = nn.glorot_init(rng, h, h)
        p["A2"] = nn.glorot_init(rng, h, h)
        p["v"] = nn.glorot_init(rng, h, 1)
        p["B"] = nn.glorot_init(rng, 2 * h, c["emb_size"])
        return p

    def attention(self, states, mask):
        """Returns ``(alpha (B, T), c_global, c_local)``."""
        p = self.params
        B, steps = mask.shape
        h = p["A1"].shape[0]
        H = T.stack(states, axis=1)
        c_g = states[-1]
        q = T.reshape(T.matmul(c_g, p["A1"]), (B, 1, h))
        k = T.matmul(H, p["A2"])
        e = T.reshape(T.matmul(T.sigmoid(T.add(q, k)), p["v"]), (B, steps))
        alpha = T.softmax(T.masked_fill(e, ~mask, nn.MASK_VALUE), axis=-1)
        c_l = T.sum_(T.mul(T.reshape(alpha, (B, steps, 1)), H), axis=1)
        return alpha, c_g, c_l

    def next_logits(self, tokens, mask, train=False, rng=None):
        c, p = self.config, self.params
        x = T.dropout(T.embedding_gather(p["E"], tokens), c["emb_dropout"], train, rng)
        states = nn.gru_stack(x, mask, p, c["n_layers"], c["emb_dropout"], train, rng)
        _, c_g, c_l = self.attention(states, mask)
        ctx = T.dropout(T.concat([c_g, c_l], axis=-1), c["ctx_dropout"], train, rng)
        return T.matmul(T.matmul(ctx, p["B"]), T.transpose(p["E"][1:]))


class _Transformer(NeuralModel):
    defaults = {"heads": 7, "n_layers": 4, "head_size": 13, "dropout": 0.1, "activation": "tanh"}
    extra_tokens = 1  # padding

    @property
    def width(self):
        return self.config["heads"] * self.config["head_size"]

    def init_params(self, rng):
        w = self.width
        p = {"E": nn.uniform_init(rng, (self.n_items + self.extra_tokens, w)),
             "P": nn.uniform_init(rng, (self.max_len, w))}
        for layer in range(self.config["n_layers"]):
            p.update(nn.block_params(rng, w, f"blk{layer}."))
        p["ln.g"] = nn.ones((w,))
        p["ln.b"] = nn.zeros((w,))
        return p

    def blocked(self, mask):
        raise NotImplementedError

    def hidden(self, tokens, mask, train=False, rng=None) -> Tensor:
        """Per-position outputs ``(B, T, width)``; zero at padding."""
        c, p = self.config, self.params
        if tokens.shape[1] > self.max_len:
            raise ValueError(f"sequence length {tokens.shape[1]} exceeds max_len {self.max_len}")
        valid = mask.astype(np.float64)[:, :, None]
        x = T.add(T.embedding_gather(p["E"], tokens), T.embedding_gather(p["P"], _positions(mask)))
        x = T.dropout(T.mul(x, valid), c["dropout"], train, rng)
        blocked = self.blocked(mask)
        for layer in range(c["n_layers"]):
            x = nn.encoder_block(x, blocked, mask, p, f"blk{layer}.", c["heads"], c["activation"],
                                 c["dropout"], train, rng)
        return T.mul(nn.affine_norm(x, p, "ln"), valid)

    def item_table(self) -> Tensor:
        return self.params["E"][1:self.n_items + 1]


class SASRec(_Transformer):
    """Causal self-attention; scores are dot products with the input item embeddings."""

    kind = "sasrec"

    def blocked(self, mask):
        steps = mask.shape[1]
        future = np.triu(np.ones((steps, steps), dtype=bool), k=1)
        return future[None, :, :] | ~mask[:, None, :]

    def next_logits(self, tokens, mask, train=False, rng=None):
        h = self.hidden(tokens, mask, train, rng)
        return T.matmul(h[:, -1], T.transpose(self.item_table()))

    def position_logits(self, tokens, mask, train=False, rng=None) -> Tensor:
        return T.matmul(self.hidden(tokens, mask, train, rng), T.transpose(self.item_table()))


class BERT4Rec(_Transformer):
    """Bidirectional encoder trained on masked positions; output tied to item embeddings plus bias."""

    kind = "bert4rec"
    defaults = {"heads": 7, "n_layers": 5, "head_size": 17, "dropout": 0.1, "activation": "relu"}
    extra_tokens = 2  # padding and mask

    @property
    def mask_token(self):
        return self.n_items + 1

    def init_params(self, rng):
        p = super().init_params(rng)
        p["out_b"] = nn.zeros((self.n_items,))
        return p

    def blocked(self, mask):
        steps = mask.shape[1]
        return np.broadcast_to(~mask[:, None, :], (mask.shape[0], steps, steps))

    def masked_logits(self, tokens, mask, positions, train=False, rng=None) -> Tensor:
        """Logits ``(M, n)`` at flat ``positions`` (row-major indices into ``tokens``)."""
        if len(positions) == 0:
            raise ValueError("no masked position")
        B, steps = tokens.shape
        h = T.reshape(self.hidden(tokens, mask, train, rng), (B * steps, self.width))
        rows = h[np.asarray(positions, dtype=np.int64)]
        return T.add(T.matmul(rows, T.transpose(self.item_table())), self.params["out_b"])

    def next_logits(self, tokens, mask, train=False, rng=None):
        """Append a mask token to each prefix and read it out."""
        B = tokens.shape[0]
        tokens = np.concatenate([tokens, np.full((B, 1), self.mask_token)], axis=1)
        mask = np.concatenate([mask, np.ones((B, 1), dtype=bool)], axis=1)
        if tokens.shape[1] > self.max_len:
            tokens, mask = tokens[:, -self.max_len:], mask[:, -self.max_len:]
        last = np.arange(B) * tokens.shape[1] + tokens.shape[1] - 1
        return self.masked_logits(tokens, mask, last, train, rng)


MODEL_CLASSES = {cls.kind: cls for cls in (LogisticRegression, MLP, GRU, NARM, SASRec, BERT4Rec)}


def build_model(kind, n_items, max_len, config=None, seed=0) -> NeuralModel:
    try:
        cls = MODEL_CLASSES[kind]
    except KeyError:
        raise ValueError(f"unknown neural model {kind!r}") from None
    return cls(n_items, max_len, config, seed)


__all__ = ["NeuralModel", "LogisticRegression", "MLP", "GRU", "NARM", "SASRec", "BERT4Rec",
           "MODEL_CLASSES", "build_model", "PAD"]
