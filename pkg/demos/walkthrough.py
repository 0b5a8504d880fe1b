"""Synthetic corpus to leaderboard in one script.

A corpus with a planted first-order purchase chain is generated, preprocessed
and split by match start time.  The counting baselines need no training; a
small GRU is trained with early stopping on validation Recall@3.  The planted
transition matrix gives the best achievable ranking, so it is printed too.

    python3 demos/walkthrough.py
"""
from seqrec.dataset import SplitSpec, compute_stats, preprocess, split_chronological
from seqrec.evaluation import EvalConfig, compare_reports, evaluate
from seqrec.models import markov_fit, pop_fit
from seqrec.synth import OracleRanker, SynthSpec, generate
from seqrec.training import TrainConfig, train

raw, oracle = generate(SynthSpec(n_matches=400, n_items=30, n_heroes=1, seed=1))
clean = preprocess(raw)
stats = compute_stats(clean)
print(f"{len(clean.matches)} matches, {stats.n_sessions} sessions, mean length {stats.mean_ls:.1f}")

train_split, val_split, test_split = split_chronological(clean, SplitSpec(0.8, 0.1, 0.1))

gru, manifest = train("gru", {"emb_size": 16, "cell_size": 32, "n_layers": 1, "dropout": 0.1},
                      train_split, val_split, TrainConfig(max_epochs=3, patience=2))
print(f"gru stopped after epoch {manifest.stopping_epoch}, best epoch {manifest.best_epoch} "
      f"(val Recall@3 {max(manifest.val_recall3):.4f})")

# every model sees the same truncated prefixes, so the reports are comparable
cfg = EvalConfig(max_len=gru.max_len)
reports = [
    evaluate(OracleRanker(oracle), test_split, cfg, name="oracle"),
    evaluate(pop_fit(train_split), test_split, cfg, name="pop"),
    evaluate(markov_fit(train_split), test_split, cfg, name="markov"),
    evaluate(gru, test_split, cfg, name="gru"),
]

# with a single hero and a pure first-order chain, Markov should sit close to the oracle
print(compare_reports(reports))
