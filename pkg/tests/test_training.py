import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqrec.autodiff import NonFiniteError, Tape, Tensor, backward, ops as T
from seqrec.models import build_model, checkpoint_bytes, pad_left
from seqrec.training import (
    TrainConfig, TrainingDiverged, augment_subsequences, best_epoch, cloze_mask, compute_l_max,
    loss_binary_one_vs_rest, loss_bpr, loss_cross_entropy, make_batches, sample_negatives,
    should_stop, train,
)

from helpers import TOY_CONFIGS, rng


def test_augment_example_and_count():
    out = augment_subsequences([[7, 8, 9]])
    assert [(p.tolist(), t) for p, t in out] == [([7], 8), ([7, 8], 9)]
    assert len(augment_subsequences([[1, 2]])) == 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.integers(1, 9), min_size=2, max_size=12), min_size=1, max_size=20))
def test_augment_count_identity(sessions):
    assert len(augment_subsequences(sessions)) == sum(len(s) - 1 for s in sessions)


def test_compute_l_max_examples():
    assert compute_l_max([5] * 40) == 5
    assert compute_l_max([1000] + [50] * 150 + list(range(2, 51))) == 50
    with pytest.raises(ValueError):
        compute_l_max([])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 200), min_size=1, max_size=300), st.sampled_from([0.5, 0.9, 0.995, 1.0]))
def test_compute_l_max_is_smallest_covering(lengths, cov):
    L = compute_l_max(lengths, cov)
    arr = np.array(lengths)
    assert np.mean(arr <= L) >= cov - 1e-12
    smaller = arr[arr < L]
    if len(smaller):
        assert np.mean(arr <= smaller.max()) < cov


def test_make_batches_truncates_and_pads():
    inst = [(np.arange(1, 121), 5), (np.array([3, 4]), 6)]
    b = make_batches(inst, 90, 8)[0]
    np.testing.assert_array_equal(b.tokens[0], np.arange(31, 121))
    assert b.tokens.shape == (2, 90)
    b = make_batches([(np.array([1, 2]), 3), (np.array([1, 2, 3, 4, 5]), 6)], 5, 8)[0]
    np.testing.assert_array_equal(b.tokens[0], [0, 0, 0, 1, 2])
    np.testing.assert_array_equal(b.targets, [3, 6])
    with pytest.raises(ValueError):
        make_batches(inst, 0, 8)


def test_make_batches_shuffles_with_seed():
    inst = [(np.array([i]), i + 1) for i in range(1, 50)]
    a = make_batches(inst, 3, 10, rng(1))
    b = make_batches(inst, 3, 10, rng(1))
    assert [x.targets.tolist() for x in a] == [x.targets.tolist() for x in b]
    assert sorted(t for x in a for t in x.targets) == list(range(2, 51))


def test_cross_entropy_examples():
    assert loss_cross_entropy(Tensor(np.zeros((1, 4))), [2]).item() == pytest.approx(math.log(4), abs=1e-12)
    big = np.zeros((1, 4))
    big[0, 1] = 50
    assert loss_cross_entropy(Tensor(big), [2]).item() < 1e-20
    logits = rng(0).standard_normal((5, 4))
    targets = np.array([1, 2, 3, 4, 1])
    per = [loss_cross_entropy(Tensor(logits[i:i + 1]), targets[i:i + 1]).item() for i in range(5)]
    assert loss_cross_entropy(Tensor(logits), targets).item() == pytest.approx(np.mean(per), abs=1e-12)
    with pytest.raises(ValueError):
        loss_cross_entropy(Tensor(logits[:1]), [0])


def test_masked_rows_change_neither_loss_nor_gradients():
    logits = Tensor(rng(1).standard_normal((3, 4)), requires_grad=True)
    with Tape() as t1:
        full = loss_cross_entropy(logits, [1, 2, 3], mask=[True, True, False])
    g1 = backward(t1, full, {"x": logits})["x"]
    sub = Tensor(logits.data[:2].copy(), requires_grad=True)
    with Tape() as t2:
        part = loss_cross_entropy(sub, [1, 2])
    g2 = backward(t2, part, {"x": sub})["x"]
    assert full.item() == part.item()
    np.testing.assert_array_equal(g1[:2], g2)
    assert not g1[2].any()


def test_all_padding_row_leaves_model_loss_unchanged():
    m = build_model("gru", 6, 5, TOY_CONFIGS["gru"], seed=0)
    tok, mask = pad_left([[1, 2, 3], [4, 5]], 5)
    base = loss_cross_entropy(m.next_logits(tok, mask), [4, 6]).item()
    tok2, mask2 = pad_left([[1, 2, 3], [4, 5], []], 5)
    extra = loss_cross_entropy(m.next_logits(tok2, mask2), [4, 6, 0], mask=[True, True, False]).item()
    assert base == extra


def test_bpr_examples():
    assert loss_bpr(Tensor(np.array([0.3])), Tensor(np.array([0.3]))).item() == pytest.approx(math.log(2), abs=1e-12)
    assert loss_bpr(Tensor(np.array([60.0])), Tensor(np.array([0.0]))).item() < 1e-20


@settings(max_examples=50, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20))
def test_bpr_symmetric_sum_bound(a, b):
    ab = loss_bpr(Tensor(np.array([a])), Tensor(np.array([b]))).item()
    ba = loss_bpr(Tensor(np.array([b])), Tensor(np.array([a]))).item()
    assert ab + ba >= 2 * math.log(2) - 1e-12


def test_binary_one_vs_rest_matches_formula():
    logits = rng(2).standard_normal((2, 3))
    y = np.array([[0, 1, 0], [0, 0, 1]])
    p = 1 / (1 + np.exp(-logits))
    expected = -(y * np.log(p) + (1 - y) * np.log(1 - p)).sum(axis=1).mean()
    got = loss_binary_one_vs_rest(Tensor(logits), [2, 3]).item()
    assert got == pytest.approx(expected, abs=1e-12)


def test_negatives_never_hit_positive_or_padding():
    pos = rng(3).integers(1, 8, size=10_000)
    neg = sample_negatives(pos, 7, rng(4))
    assert np.all(neg != pos) and neg.min() >= 1 and neg.max() <= 7


def test_cloze_mask_rules():
    seq = np.arange(1, 11)
    masked, pos, orig = cloze_mask(seq, 1e-12, rng(0), 99)
    assert len(pos) == 1 and masked[pos[0]] == 99 and orig[0] == seq[pos[0]]
    masked, pos, orig = cloze_mask(seq, 1.0, rng(0), 99)
    assert np.all(masked == 99) and orig.tolist() == seq.tolist()
    with pytest.raises(ValueError):
        cloze_mask([], 0.2, rng(0), 99)


def test_cloze_mask_rate():
    masked, pos, _ = cloze_mask(np.ones(100_000, dtype=int), 0.2, rng(5), 9)
    assert abs(len(pos) / 100_000 - 0.2) < 0.01


def test_early_stopping_trace():
    h = [0.5, 0.6, 0.6, 0.6, 0.6]
    assert [should_stop(h[:k], 3, 25) for k in range(1, 6)] == [False, False, False, False, True]
    assert best_epoch(h) == 2
    assert should_stop([0.1] * 25, 30, 25)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(patience=5, max_epochs=4).validate()
    with pytest.raises(ValueError):
        TrainConfig(lr=0).validate()


CFG = dict(max_epochs=3, patience=1, batch_size=64, warmup_steps=5)


@pytest.mark.parametrize("kind", ["pop", "markov", "lr", "mlp", "gru", "narm", "sasrec", "bert4rec"])
def test_train_every_kind(kind, small_splits, tmp_path):
    tr, va, _ = small_splits
    ranker, manifest = train(kind, TOY_CONFIGS.get(kind, {}), tr, va, TrainConfig(**CFG), tmp_path)
    assert len(manifest.val_recall3) == manifest.stopping_epoch
    assert manifest.val_recall3[manifest.best_epoch - 1] == max(manifest.val_recall3)
    saved = json.loads((tmp_path / f"{kind}.manifest.json").read_text())
    assert saved["kind"] == kind and (tmp_path / f"{kind}.ckpt").exists()
    assert all(np.isfinite(manifest.train_loss))


def test_training_is_deterministic(small_splits, tmp_path):
    tr, va, _ = small_splits
    runs = []
    for k in range(2):
        r, m = train("gru", TOY_CONFIGS["gru"] | {"dropout": 0.2}, tr, va, TrainConfig(**CFG, seed=9),
                     tmp_path / str(k))
        runs.append((checkpoint_bytes(r), (tmp_path / str(k) / "gru.manifest.json").read_text()))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1].replace("/1/", "/0/") == runs[1][1].replace("/1/", "/0/")


def test_best_epoch_parameters_are_restored(small_splits):
    tr, va, _ = small_splits
    from seqrec.evaluation import evaluate
    r, m = train("mlp", TOY_CONFIGS["mlp"], tr, va, TrainConfig(max_epochs=4, patience=4, lr=0.05))
    assert evaluate(r, va).recall[3] == pytest.approx(max(m.val_recall3), abs=1e-12)


def test_divergence_is_reported(small_splits, monkeypatch):
    tr, va, _ = small_splits
    import seqrec.training as training

    def exploding(*a, **k):
        raise NonFiniteError("boom")
    monkeypatch.setattr(training, "loss_cross_entropy", exploding)
    with pytest.raises(TrainingDiverged) as exc:
        train("mlp", TOY_CONFIGS["mlp"], tr, va, TrainConfig(**CFG))
    assert exc.value.manifest.failure_epoch == 1
