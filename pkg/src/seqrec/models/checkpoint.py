"""Neural ranker wrapper and the checkpoint file format.

A checkpoint is one line of JSON (the header) terminated by ``\\n`` and
followed by a blob of little-endian float32 values::

    {"config": {...}, "format_version": 1, "kind": "gru",
     "tensors": [{"name": "E", "shape": [51, 32], "dtype": "f32",
                  "byte_offset": 0, "byte_len": 6528}, ...]}

Offsets are relative to the start of the blob.  ``config`` carries the model
configuration plus ``item_ids`` and ``max_len``.
"""
from __future__ import annotations

import json

import numpy as np

from ..autodiff import Tensor
from .base import ItemIndex, Ranker, pad_left
from .baselines import MarkovRanker, PopRanker
from .neural import BERT4Rec, NeuralModel, build_model

FORMAT_VERSION = 1


class NeuralRanker(Ranker):
    def __init__(self, model: NeuralModel, index: ItemIndex, batch_size=512):
        super().__init__(index, model.max_len)
        if model.n_items != len(index):
            raise ValueError("model and index disagree on the number of items")
        self.model = model
        self.kind = model.kind
        self.batch_size = batch_size

    def truncate(self, prefix_tokens):
        room = self.max_len - 1 if isinstance(self.model, BERT4Rec) else self.max_len
        return prefix_tokens[-room:]

    def score_tokens(self, prefixes, heroes=None):
        out = []
        for start in range(0, len(prefixes), self.batch_size):
            tokens, mask = pad_left(prefixes[start:start + self.batch_size])
            out.append(self.model.next_logits(tokens, mask, train=False).data)
        return np.concatenate(out, axis=0)


def _header_bytes(header):
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _pack(kind, config, tensors):
    entries, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "f32",
                        "byte_offset": offset, "byte_len": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {"format_version": FORMAT_VERSION, "kind": kind, "config": config, "tensors": entries}
    return _header_bytes(header) + b"\n" + b"".join(chunks)


def checkpoint_bytes(ranker: Ranker) -> bytes:
    base = {"item_ids": ranker.item_ids.tolist(), "max_len": ranker.max_len}
    if isinstance(ranker, NeuralRanker):
        m = ranker.model
        return _pack(m.kind, {**m.config, **base}, {k: p.data for k, p in m.params.items()})
    if isinstance(ranker, PopRanker):
        return _pack("pop", base, {"counts": ranker.counts})
    if isinstance(ranker, MarkovRanker):
        return _pack("markov", base, {"counts": ranker.counts, "pop_counts": ranker.pop_counts})
    raise TypeError(f"cannot checkpoint {type(ranker).__name__}")


def read_checkpoint(data: bytes):
    """Returns ``(header, {name: float32 array})``."""
    head, sep, blob = data.partition(b"\n")
    if not sep:
        raise ValueError("checkpoint header not terminated")
    header = json.loads(head)
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
    tensors = {}
    for t in header["tensors"]:
        if t["dtype"] != "f32":
            raise ValueError(f"unsupported dtype {t['dtype']}")
        raw = blob[t["byte_offset"]:t["byte_offset"] + t["byte_len"]]
        tensors[t["name"]] = np.frombuffer(raw, dtype="<f4").reshape(t["shape"])
    return header, tensors


def ranker_from_bytes(data: bytes) -> Ranker:
    header, tensors = read_checkpoint(data)
    config = dict(header["config"])
    index = ItemIndex(config.pop("item_ids"))
    max_len = config.pop("max_len")
    kind = header["kind"]
    if kind == "pop":
        return PopRanker(index, tensors["counts"].astype(np.float64), max_len)
    if kind == "markov":
        return MarkovRanker(index, tensors["counts"].astype(np.float64),
                            tensors["pop_counts"].astype(np.float64), max_len)
    model = build_model(kind, len(index), max_len, config)
    for name, arr in tensors.items():
        if model.params[name].shape != arr.shape:
            raise ValueError(f"tensor {name} has shape {arr.shape}, expected {model.params[name].shape}")
        model.params[name] = Tensor(arr.astype(np.float64), requires_grad=True)
    return NeuralRanker(model, index)


def save_checkpoint(path, ranker: Ranker):
    data = checkpoint_bytes(ranker)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def load_checkpoint(path) -> Ranker:
    with open(path, "rb") as fh:
        return ranker_from_bytes(fh.read())
