"""Match corpora: data model, ingestion, preprocessing, splitting and statistics."""
from .model import (
    DOTA350K_SPLIT, OPENDOTA_SPLIT, DataError, Dataset, DatasetStats, HeroEntry, HeroVocab,
    ItemEntry, ItemVocab, MatchRecord, Purchase, Session, SplitSpec,
)
from .io import (
    LineError, MatchFormatError, dumps_matches, load_corpus, match_to_json, parse_matches,
    read_heroes, read_items, save_corpus, write_heroes, write_items, write_matches,
)
from .preprocess import DEFAULT_MODE, DEFAULT_TRIM_Q, FilterCounts, preprocess, split_chronological
from .stats import (
    Representativeness, compute_stats, frequency_ranking, kendall_tau, plot_csv, plot_data,
    rolling_mean, validate_split_representativeness,
)

__all__ = [
    "DOTA350K_SPLIT", "OPENDOTA_SPLIT", "DataError", "Dataset", "DatasetStats", "HeroEntry",
    "HeroVocab", "ItemEntry", "ItemVocab", "MatchRecord", "Purchase", "Session", "SplitSpec",
    "LineError", "MatchFormatError", "dumps_matches", "load_corpus", "match_to_json",
    "parse_matches", "read_heroes", "read_items", "save_corpus", "write_heroes", "write_items",
    "write_matches", "DEFAULT_MODE", "DEFAULT_TRIM_Q", "FilterCounts", "preprocess",
    "split_chronological", "Representativeness", "compute_stats", "frequency_ranking",
    "kendall_tau", "plot_csv", "plot_data", "rolling_mean", "validate_split_representativeness",
]
