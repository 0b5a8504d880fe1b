"""Which model classes can see a second-order dependency?

Each next purchase here depends on the last two items.  LR only sees the
previous item, the MLP sees a bag of the whole prefix, and the GRU sees the
order.  Recall@3 on the held-out matches should rank them accordingly.

    python3 demos/planted_structure.py          # about a minute on one core
"""
from seqrec.dataset import SplitSpec, preprocess, split_chronological
from seqrec.evaluation import evaluate
from seqrec.models import markov_fit, pop_fit
from seqrec.synth import SynthSpec, generate
from seqrec.training import TrainConfig, train

raw, _ = generate(SynthSpec(n_matches=1000, n_items=50, n_heroes=1, seed=7,
                            second_order_weight=0.8, mean_ls=8))
tr, va, te = split_chronological(preprocess(raw), SplitSpec(0.9, 0.05, 0.05))

scores = {"pop": evaluate(pop_fit(tr), te).recall[3],
          "markov": evaluate(markov_fit(tr), te).recall[3]}
cfg = TrainConfig(max_epochs=5, patience=2)
for kind, model_cfg in [("lr", {}),
                        ("mlp", {"hidden_size": 64, "n_layers": 2}),
                        ("gru", {"emb_size": 32, "cell_size": 64, "n_layers": 1, "dropout": 0.1})]:
    ranker, _ = train(kind, model_cfg, tr, va, cfg)
    scores[kind] = evaluate(ranker, te).recall[3]

for name, value in sorted(scores.items(), key=lambda kv: -kv[1]):
    print(f"{name:7s} Recall@3 {value:.4f}")
