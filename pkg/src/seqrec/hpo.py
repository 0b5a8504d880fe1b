"""Random search over per-model hyperparameter grids.

Every dimension is a finite grid (integer range with step, stepped real
range, or a categorical set); a sampled config draws each dimension
independently and uniformly.  Trial ``t`` of a search with master seed ``s``
uses the seed ``SeedSequence([s, t])``, so trials are independent of each
other and of execution order.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .evaluation import EvalConfig, evaluate
from .training import TrainConfig, TrainingDiverged, clone_config, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dim:
    """One named grid dimension; ``values`` holds every admissible setting."""

    name: str
    values: tuple

    @classmethod
    def int_range(cls, name, lo, hi, step=1):
        return cls(name, tuple(range(lo, hi + 1, step)))

    @classmethod
    def real_range(cls, name, lo, hi, step):
        # both endpoints included; values rounded so the grid is exact in decimal
        count = int(round((hi - lo) / step))
        return cls(name, tuple(round(lo + i * step, 10) for i in range(count + 1)))

    @classmethod
    def choice(cls, name, *values):
        return cls(name, tuple(values))

    def to_json(self):
        return {"name": self.name, "values": list(self.values)}


@dataclass(frozen=True)
class ParamSpace:
    kind: str
    dims: tuple = ()

    def __post_init__(self):
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("duplicate dimension name")
        if any(not d.values for d in self.dims):
            raise ValueError("empty dimension")

    def contains(self, config) -> bool:
        return set(config) == {d.name for d in self.dims} and all(
            config[d.name] in d.values for d in self.dims)

    def size(self) -> int:
        return int(np.prod([len(d.values) for d in self.dims])) if self.dims else 1

    def to_json(self):
        return {"kind": self.kind, "dims": [d.to_json() for d in self.dims]}


def _transformer_dims():
    return (
        Dim.int_range("heads", 1, 8),
        Dim.int_range("n_layers", 1, 6),
        Dim.int_range("head_size", 8, 32),
        Dim.real_range("dropout", 0.1, 0.5, 0.05),
        Dim.choice("activation", "relu", "tanh"),
    )


SPACES = {
    "lr": ParamSpace("lr"),
    "mlp": ParamSpace("mlp", (Dim.int_range("hidden_size", 16, 256, 16), Dim.int_range("n_layers", 1, 3))),
    "gru": ParamSpace("gru", (
        Dim.int_range("emb_size", 16, 64, 16),
        Dim.int_range("cell_size", 16, 256, 16),
        Dim.int_range("n_layers", 1, 2),
        Dim.real_range("dropout", 0.1, 0.5, 0.05),
    )),
    "narm": ParamSpace("narm", (
        Dim.int_range("emb_size", 16, 64, 16),
        Dim.int_range("enc_size", 16, 256, 16),
        Dim.int_range("n_layers", 1, 2),
        Dim.real_range("ctx_dropout", 0.1, 0.5, 0.05),
        Dim.real_range("emb_dropout", 0.1, 0.5, 0.05),
    )),
    "sasrec": ParamSpace("sasrec", _transformer_dims()),
    "bert4rec": ParamSpace("bert4rec", _transformer_dims()),
}

# best settings found by the published search, per corpus
BEST_CONFIGS = {
    "dota350k": {
        "mlp": {"hidden_size": 256, "n_layers": 3},
        "bert4rec": {"heads": 7, "n_layers": 5, "head_size": 17, "dropout": 0.1, "activation": "relu"},
        "sasrec": {"heads": 7, "n_layers": 4, "head_size": 13, "dropout": 0.1, "activation": "tanh"},
        "gru": {"emb_size": 64, "cell_size": 128, "n_layers": 2, "dropout": 0.1},
        "narm": {"emb_size": 32, "enc_size": 80, "n_layers": 1, "ctx_dropout": 0.2, "emb_dropout": 0.15},
    },
    "opendota": {
        "mlp": {"hidden_size": 256, "n_layers": 2},
        "bert4rec": {"heads": 8, "n_layers": 4, "head_size": 32, "dropout": 0.1, "activation": "relu"},
        "sasrec": {"heads": 5, "n_layers": 6, "head_size": 30, "dropout": 0.2, "activation": "tanh"},
        "gru": {"emb_size": 32, "cell_size": 224, "n_layers": 2, "dropout": 0.1},
        "narm": {"emb_size": 64, "enc_size": 176, "n_layers": 1, "ctx_dropout": 0.15, "emb_dropout": 0.1},
    },
}


def sample_config(space: ParamSpace, rng) -> dict:
    """Independent uniform draw on each dimension's grid."""
    out = {}
    for d in space.dims:
        v = d.values[int(rng.integers(len(d.values)))]
        out[d.name] = v.item() if isinstance(v, np.generic) else v
    return out


def trial_seed(master_seed, trial_id) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(trial_id)]).generate_state(1)[0])


@dataclass
class Trial:
    trial_id: int
    config: dict
    seed: int
    val_recall3: float | None = None
    manifest: dict | None = None
    diverged: bool = False

    def to_json(self):
        return asdict(self)


class SearchFailed(RuntimeError):
    pass


def _run_trial(args):
    kind, trial_id, config, seed, train_split, val_split, cfg, out_dir = args
    trial_dir = None if out_dir is None else Path(out_dir) / f"trial_{trial_id:03d}"
    tcfg = clone_config(cfg, seed=seed)
    try:
        ranker, manifest = train(kind, config, train_split, val_split, tcfg, trial_dir)
    except TrainingDiverged as exc:
        if trial_dir is not None:
            trial_dir.mkdir(parents=True, exist_ok=True)
            exc.manifest.save(trial_dir / f"{kind}.manifest.json")
        return Trial(trial_id, config, seed, None, exc.manifest.to_json(), True), None
    score = manifest.val_recall3[manifest.best_epoch - 1]
    return Trial(trial_id, config, seed, score, manifest.to_json()), ranker


def select_best(trials):
    """Highest validation Recall@3; ties go to the earlier trial id."""
    live = [t for t in trials if not t.diverged]
    if not live:
        raise SearchFailed("every trial diverged")
    return min(live, key=lambda t: (-t.val_recall3, t.trial_id))


@dataclass
class SearchResult:
    best: Trial
    trials: list
    test_metrics: dict | None = None
    space: dict = field(default_factory=dict)
    master_seed: int = 0

    def to_json(self):
        return {
            "space": self.space,
            "master_seed": self.master_seed,
            "best_trial": self.best.trial_id,
            "best_config": self.best.config,
            "test_metrics": self.test_metrics,
            "trials": [{"trial_id": t.trial_id, "config": t.config, "seed": t.seed,
                        "val_recall3": t.val_recall3, "diverged": t.diverged} for t in self.trials],
        }


def run_search(kind, train_split, val_split, test_split=None, trials=30, master_seed=0,
               cfg: TrainConfig | None = None, out_dir=None, jobs=1, space=None) -> SearchResult:
    """Train ``trials`` sampled configs and keep the best by validation Recall@3.

    Only the best trial is evaluated on ``test_split``.  With ``out_dir``
    each trial's checkpoint and manifest go to ``trial_NNN/`` and the summary
    to ``search.json``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    space = space or SPACES[kind]
    cfg = cfg or TrainConfig()
    cfg.validate()
    jobs_args = []
    for t in range(trials):
        seed = trial_seed(master_seed, t)
        config = sample_config(space, np.random.Generator(np.random.Philox(seed)))
        jobs_args.append((kind, t, config, seed, train_split, val_split, cfg, out_dir))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial, jobs_args))
    else:
        results = [_run_trial(a) for a in jobs_args]
    done = [r[0] for r in results]
    for t in done:
        log.info("trial %d %s val rec@3 %s", t.trial_id, t.config, t.val_recall3)

    best = select_best(done)
    result = SearchResult(best, done, space=space.to_json(), master_seed=int(master_seed))
    if test_split is not None:
        ranker = results[best.trial_id][1]
        report = evaluate(ranker, test_split, EvalConfig(), name=kind)
        result.test_metrics = report.to_json()
        best.manifest["test_metrics"] = result.test_metrics
        if out_dir is not None:
            path = Path(out_dir) / f"trial_{best.trial_id:03d}" / f"{kind}.manifest.json"
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(best.manifest, fh, sort_keys=True, indent=2)
                fh.write("\n")
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(out_dir) / "search.json", "w", encoding="utf-8") as fh:
            json.dump(result.to_json(), fh, sort_keys=True, indent=2)
            fh.write("\n")
    return result
