"""The eight recommenders behind one ranker contract."""
from .base import (
    KINDS, NEURAL_KINDS, PAD, ItemIndex, Ranker, multi_hot, multi_hot_batch, pad_left, rank_order,
    target_rank, target_ranks,
)
from .baselines import MarkovRanker, PopRanker, markov_fit, pop_fit
from .neural import BERT4Rec, GRU, MLP, MODEL_CLASSES, NARM, LogisticRegression, NeuralModel, SASRec, build_model
from .checkpoint import (
    NeuralRanker, checkpoint_bytes, load_checkpoint, ranker_from_bytes, read_checkpoint, save_checkpoint,
)

__all__ = [
    "KINDS", "NEURAL_KINDS", "PAD", "ItemIndex", "Ranker", "multi_hot", "multi_hot_batch",
    "pad_left", "rank_order", "target_rank", "target_ranks", "MarkovRanker", "PopRanker",
    "markov_fit", "pop_fit", "BERT4Rec", "GRU", "MLP", "MODEL_CLASSES", "NARM",
    "LogisticRegression", "NeuralModel", "SASRec", "build_model", "NeuralRanker",
    "checkpoint_bytes", "load_checkpoint", "ranker_from_bytes", "read_checkpoint", "save_checkpoint",
]
