"""Training instances, losses and the optimization loop.

Three regimes:

* next-item (LR, MLP, GRU, NARM): every prefix of a session predicts the
  following item; cross-entropy, except LR which uses one binary
  cross-entropy per item.
* per-position BPR (SASRec): each position predicts its successor against one
  uniformly sampled negative.
* Cloze (BERT4Rec): randomly masked positions are reconstructed with
  cross-entropy; the learning rate warms up linearly.
"""
from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .autodiff import Adam, NonFiniteError, Tape, Tensor, backward, ops as T
from .evaluation import EvalConfig, evaluate
from .models import (
    BERT4Rec, ItemIndex, NeuralRanker, SASRec, build_model, markov_fit, pad_left,
    pop_fit, save_checkpoint,
)

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.Philox"


class TrainingDiverged(RuntimeError):
    def __init__(self, message, manifest):
        super().__init__(message)
        self.manifest = manifest


@dataclass
class TrainConfig:
    lr: float = 1e-3
    max_epochs: int = 25
    patience: int = 3
    batch_size: int = 128
    warmup_steps: int = 10000  # BERT4Rec only
    mask_prob: float = 0.2  # BERT4Rec only
    max_len: int | None = None  # None: computed from the training split at 99.5% coverage
    coverage: float = 0.995
    seed: int = 0

    def validate(self):
        for name in ("lr", "max_epochs", "patience", "batch_size", "warmup_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience exceeds max_epochs")
        if not 0 < self.mask_prob < 1:
            raise ValueError("mask_prob must lie in (0, 1)")
        if self.max_len is not None and self.max_len <= 0:
            raise ValueError("max_len must be positive")


@dataclass
class RunManifest:
    kind: str
    model_config: dict
    train_config: dict
    seed: int
    rng_algorithm: str = RNG_ALGORITHM
    max_len: int = 0
    val_recall3: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopping_epoch: int = 0
    checkpoint: str | None = None
    test_metrics: dict | None = None
    failure_epoch: int | None = None
    conventions: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=2)
            fh.write("\n")


# -- instances ------------------------------------------------------------------

def augment_subsequences(sessions):
    """All ``(prefix, next_item)`` pairs: ``l - 1`` per session of length ``l``."""
    out = []
    for s in sessions:
        s = np.asarray(s)
        for j in range(1, len(s)):
            out.append((s[:j], int(s[j])))
    return out


def compute_l_max(lengths, coverage=0.995) -> int:
    """Smallest L such that a fraction >= ``coverage`` of sessions has length <= L."""
    lengths = np.sort(np.asarray(lengths))
    if not len(lengths):
        raise ValueError("no sessions")
    need = math.ceil(Fraction(str(coverage)) * len(lengths))
    return int(lengths[max(need, 1) - 1])


@dataclass
class Batch:
    tokens: np.ndarray  # (B, T) left-padded
    mask: np.ndarray  # (B, T) real positions
    targets: np.ndarray  # (B,) next-item tokens


def make_batches(instances, l_max, batch_size, rng=None):
    """Truncate prefixes to their last ``l_max`` items, shuffle, left-pad per batch."""
    if l_max <= 0:
        raise ValueError("l_max must be positive")
    order = rng.permutation(len(instances)) if rng is not None else np.arange(len(instances))
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [instances[i] for i in order[start:start + batch_size]]
        tokens, mask = pad_left([p[-l_max:] for p, _ in chunk])
        batches.append(Batch(tokens, mask, np.array([t for _, t in chunk], dtype=np.int64)))
    return batches


# -- losses -----------------------------------------------------------------------

def _weights(mask, n):
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    count = mask.sum()
    if count == 0:
        raise ValueError("no unmasked instance")
    return mask.astype(np.float64) / count


def loss_cross_entropy(logits, targets, mask=None):
    """Mean of ``-log softmax(logits)[target]`` over unmasked rows.

    ``logits`` is ``(N, n)`` over item tokens ``1..n``; ``targets`` are tokens.
    """
    targets = np.asarray(targets, dtype=np.int64)
    w = _weights(mask, len(targets))
    live = w > 0
    if np.any(targets[live] < 1):
        raise ValueError("padding token used as a target")
    idx = np.where(live, targets - 1, 0)
    picked = T.pick(T.log_softmax(logits, axis=-1), idx)
    return T.neg(T.sum_(T.mul(picked, w)))


def loss_bpr(pos, neg, mask=None):
    """Mean of ``-log sigmoid(pos - neg)`` over unmasked entries."""
    pos, neg = T.as_tensor(pos), T.as_tensor(neg)
    w = _weights(None if mask is None else np.asarray(mask).reshape(-1), pos.data.size)
    diff = T.reshape(T.sub(pos, neg), (pos.data.size,))
    return T.neg(T.sum_(T.mul(T.log_sigmoid(diff), w)))


def loss_binary_one_vs_rest(logits, targets, mask=None):
    """Per-item binary cross-entropy, summed over items and averaged over rows."""
    targets = np.asarray(targets, dtype=np.int64)
    n = logits.shape[-1]
    y = np.zeros((len(targets), n))
    y[np.arange(len(targets)), targets - 1] = 1.0
    w = _weights(mask, len(targets))[:, None]
    ll = T.add(T.mul(T.log_sigmoid(logits), y), T.mul(T.log_sigmoid(T.neg(logits)), 1.0 - y))
    return T.neg(T.sum_(T.mul(ll, w)))


def sample_negatives(positives, n_items, rng):
    """One uniform negative per positive token, never equal to it or to padding."""
    positives = np.asarray(positives)
    r = rng.integers(1, n_items, size=positives.shape)
    return np.where(r >= positives, r + 1, r)


def cloze_mask(sequence, rho, rng, mask_token):
    """Mask each position with probability ``rho``; at least one is always masked.

    Returns ``(masked_sequence, positions, original_tokens)``.
    """
    seq = np.asarray(sequence)
    if seq.size == 0:
        raise ValueError("empty sequence")
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    chosen = rng.random(seq.shape) < rho
    if not chosen.any():
        chosen[rng.integers(len(seq))] = True
    masked = seq.copy()
    masked[chosen] = mask_token
    positions = np.flatnonzero(chosen)
    return masked, positions, seq[positions]


# -- early stopping ------------------------------------------------------------------

def best_epoch(history) -> int:
    """1-based epoch of the first strict maximum of a validation history."""
    return int(np.argmax(history)) + 1 if len(history) else 0


def should_stop(history, patience, max_epochs) -> bool:
    if len(history) >= max_epochs:
        return True
    return len(history) - best_epoch(history) >= patience


# -- loop -----------------------------------------------------------------------------

def _session_tokens(split, index):
    return [index.tokens(s.items) for s in split.sessions()]


def _lr_at(step, cfg, kind):
    if kind == "bert4rec" and step <= cfg.warmup_steps:
        return cfg.lr * step / cfg.warmup_steps
    return cfg.lr


class _Regime:
    """Per-epoch batch construction and loss for one model family."""

    def __init__(self, model, sessions, cfg):
        self.model, self.cfg = model, cfg
        L = model.max_len
        if isinstance(model, SASRec):
            self.kind = "bpr"
            self.seqs = [s[-(L + 1):] for s in sessions if len(s) >= 2]
        elif isinstance(model, BERT4Rec):
            self.kind = "cloze"
            self.seqs = [s[-L:] for s in sessions if len(s) >= 1]
        else:
            self.kind = "next"
            self.instances = augment_subsequences(sessions)

    def batches(self, rng):
        cfg = self.cfg
        if self.kind == "next":
            return make_batches(self.instances, self.model.max_len, cfg.batch_size, rng)
        order = rng.permutation(len(self.seqs))
        return [[self.seqs[i] for i in order[k:k + cfg.batch_size]]
                for k in range(0, len(order), cfg.batch_size)]

    def loss(self, batch, rng):
        m = self.model
        if self.kind == "next":
            logits = m.next_logits(batch.tokens, batch.mask, train=True, rng=rng)
            if m.kind == "lr":
                return loss_binary_one_vs_rest(logits, batch.targets)
            return loss_cross_entropy(logits, batch.targets)
        if self.kind == "bpr":
            inp, mask = pad_left([s[:-1] for s in batch])
            tgt, _ = pad_left([s[1:] for s in batch])
            neg = sample_negatives(np.maximum(tgt, 1), m.n_items, rng)
            h = m.hidden(inp, mask, train=True, rng=rng)
            E = m.params["E"]
            pos_s = T.sum_(T.mul(h, T.embedding_gather(E, tgt)), axis=-1)
            neg_s = T.sum_(T.mul(h, T.embedding_gather(E, neg)), axis=-1)
            return loss_bpr(pos_s, neg_s, mask)
        masked, positions, targets = [], [], []
        width = max(len(s) for s in batch)
        for row, s in enumerate(batch):
            ms, pos, orig = cloze_mask(s, self.cfg.mask_prob, rng, m.mask_token)
            masked.append(ms)
            positions.append(row * width + (width - len(s)) + pos)
            targets.append(orig)
        tokens, mask = pad_left(masked, width)
        logits = m.masked_logits(tokens, mask, np.concatenate(positions), train=True, rng=rng)
        return loss_cross_entropy(logits, np.concatenate(targets))


def _fit_baseline(kind, train_split, val_split, cfg, index, max_len):
    ranker = (pop_fit if kind == "pop" else markov_fit)(train_split, index, max_len)
    manifest = RunManifest(kind, {}, asdict(cfg), cfg.seed, max_len=max_len)
    manifest.val_recall3 = [evaluate(ranker, val_split, EvalConfig()).recall[3]]
    manifest.best_epoch = manifest.stopping_epoch = 1
    return ranker, manifest


def train(kind, model_config, train_split, val_split, cfg=None, out_dir=None, index=None,
          progress=False):
    """Train one model with early stopping on validation Recall@3.

    Returns ``(ranker, manifest)``; the ranker holds the parameters of the
    best validation epoch.  With ``out_dir`` the checkpoint and manifest are
    written there.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    index = index or ItemIndex.from_vocab(train_split.vocab)
    sessions = _session_tokens(train_split, index)
    max_len = cfg.max_len or compute_l_max([len(s) for s in sessions], cfg.coverage)

    if kind in ("pop", "markov"):
        ranker, manifest = _fit_baseline(kind, train_split, val_split, cfg, index, max_len)
        return _finish(ranker, manifest, out_dir)

    init_seed, run_seed = np.random.SeedSequence(cfg.seed).generate_state(2)
    model = build_model(kind, len(index), max_len, model_config, seed=int(init_seed))
    rng = np.random.Generator(np.random.Philox(int(run_seed)))
    ranker = NeuralRanker(model, index)
    opt = Adam(model.params, lr=cfg.lr)
    regime = _Regime(model, sessions, cfg)
    manifest = RunManifest(kind, dict(model.config), asdict(cfg), cfg.seed, max_len=max_len)
    manifest.conventions = {
        "optimizer": "adam(beta1=0.9, beta2=0.999, eps=1e-8)",
        "warmup": "linear 0->lr over warmup_steps, then constant" if kind == "bert4rec" else "none",
        "negatives": "1 uniform per position, resampled each epoch" if kind == "sasrec" else "n/a",
        "cloze_min_masked": 1 if kind == "bert4rec" else "n/a",
        "init": "uniform(-0.05, 0.05) embeddings, glorot-uniform dense",
    }

    best_params = None
    step = 0
    for epoch in range(1, cfg.max_epochs + 1):
        total, count = 0.0, 0
        try:
            for batch in regime.batches(rng):
                step += 1
                with Tape() as tape:
                    loss = regime.loss(batch, rng)
                grads = backward(tape, loss, model.params)
                opt.step(grads, lr=_lr_at(step, cfg, kind))
                for p in model.params.values():
                    if not np.all(np.isfinite(p.data)):
                        raise NonFiniteError("non-finite parameter after update")
                total += loss.item()
                count += 1
        except NonFiniteError as exc:
            manifest.failure_epoch = epoch
            raise TrainingDiverged(f"{kind} diverged in epoch {epoch}: {exc}", manifest) from exc
        manifest.train_loss.append(total / max(count, 1))
        manifest.val_recall3.append(evaluate(ranker, val_split, EvalConfig()).recall[3])
        if best_epoch(manifest.val_recall3) == epoch:
            best_params = {k: p.data.copy() for k, p in model.params.items()}
        if progress:
            log.info("%s epoch %d loss %.4f val rec@3 %.4f", kind, epoch,
                     manifest.train_loss[-1], manifest.val_recall3[-1])
        if should_stop(manifest.val_recall3, cfg.patience, cfg.max_epochs):
            break

    manifest.stopping_epoch = len(manifest.val_recall3)
    manifest.best_epoch = best_epoch(manifest.val_recall3)
    for k, arr in best_params.items():
        model.params[k] = Tensor(arr, requires_grad=True)
    return _finish(ranker, manifest, out_dir)


def _finish(ranker, manifest, out_dir):
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{manifest.kind}.ckpt"
        save_checkpoint(path, ranker)
        manifest.checkpoint = str(path)
        manifest.save(d / f"{manifest.kind}.manifest.json")
    return ranker, manifest


def clone_config(cfg: TrainConfig, **changes) -> TrainConfig:
    new = copy.copy(cfg)
    for k, v in changes.items():
        setattr(new, k, v)
    return new
