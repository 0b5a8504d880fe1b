"""Hand-built fixtures shared by the test modules."""
import numpy as np

from seqrec.dataset import Dataset, HeroEntry, HeroVocab, ItemEntry, ItemVocab, MatchRecord, Session


def make_vocab(n=6, consumable=()):
    return ItemVocab(tuple(ItemEntry(i, f"item{i}", True, i in consumable) for i in range(1, n + 1)))


def make_heroes(n=3):
    return HeroVocab(tuple(HeroEntry(h, f"hero{h}") for h in range(1, n + 1)))


def make_match(mid, sessions, start=None, duration=1800, mode="ranked_all_pick", abandoned=False, hero=1):
    """``sessions`` is a list of item lists; times are spaced 10 s apart."""
    ss = tuple(Session(k, hero, "radiant" if k < 5 else "dire", tuple(items),
                       tuple(10 * (j + 1) for j in range(len(items))))
               for k, items in enumerate(sessions))
    return MatchRecord(mid, 1000 + mid if start is None else start, duration, mode, abandoned, ss)


def make_dataset(session_lists, n_items=6):
    """One match per session list, in order."""
    matches = tuple(make_match(i + 1, [s]) for i, s in enumerate(session_lists))
    return Dataset(make_vocab(n_items), make_heroes(), matches)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


TOY_CONFIGS = {
    "lr": {},
    "mlp": {"hidden_size": 4, "n_layers": 2},
    "gru": {"emb_size": 3, "cell_size": 4, "n_layers": 2, "dropout": 0.0},
    "narm": {"emb_size": 3, "enc_size": 4, "n_layers": 1, "ctx_dropout": 0.0, "emb_dropout": 0.0},
    "sasrec": {"heads": 2, "n_layers": 1, "head_size": 2, "dropout": 0.0, "activation": "tanh"},
    "bert4rec": {"heads": 2, "n_layers": 1, "head_size": 2, "dropout": 0.0, "activation": "relu"},
}
TOY_SESSIONS = [[1, 2, 3, 4, 5], [6, 1, 2], [3, 3]]


def toy_loss(model):
    """Scalar training loss of ``model`` (6 items, sequences <= 5) on a fixed toy batch."""
    from seqrec.autodiff import ops as T
    from seqrec.models import pad_left
    from seqrec.training import loss_bpr, loss_cross_entropy

    if model.kind == "sasrec":
        inp, mask = pad_left([s[:-1] for s in TOY_SESSIONS])
        tgt, _ = pad_left([s[1:] for s in TOY_SESSIONS])
        neg = np.where(mask, (tgt % 6) + 1, 0)
        h = model.hidden(inp, mask)
        E = model.params["E"]
        pos = T.sum_(T.mul(h, T.embedding_gather(E, tgt)), axis=-1)
        ng = T.sum_(T.mul(h, T.embedding_gather(E, neg)), axis=-1)
        return loss_bpr(pos, ng, mask)
    if model.kind == "bert4rec":
        tokens, mask = pad_left([[1, 7, 3, 7], [6, 7, 2], [7, 3]])
        positions = np.flatnonzero(tokens.reshape(-1) == 7)
        return loss_cross_entropy(model.masked_logits(tokens, mask, positions), np.array([2, 4, 1, 3]))
    tokens, mask = pad_left([s[:-1] for s in TOY_SESSIONS])
    return loss_cross_entropy(model.next_logits(tokens, mask), np.array([s[-1] for s in TOY_SESSIONS]))


def generic_point(model, seed=0, scale=0.5):
    """Move every parameter to a random point.

    At initialization zero biases sit on ReLU kinks and small embeddings make
    gradients tiny enough for finite differences to drown in roundoff.
    """
    r = rng(seed)
    for p in model.params.values():
        p.data[...] = scale * r.standard_normal(p.shape)
    return model
