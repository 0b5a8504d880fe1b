import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqrec.dataset import (
    DOTA350K_SPLIT, OPENDOTA_SPLIT, DataError, Dataset, FilterCounts, ItemEntry, ItemVocab,
    MatchFormatError, SplitSpec, compute_stats, dumps_matches, frequency_ranking, kendall_tau,
    load_corpus, parse_matches, plot_csv, plot_data, preprocess, read_heroes, read_items,
    rolling_mean, save_corpus, split_chronological, validate_split_representativeness,
)
from seqrec.synth import SynthSpec, generate

from helpers import make_dataset, make_heroes, make_match, make_vocab


def _line(match_id=1, sessions=None, **over):
    obj = {"match_id": match_id, "start_time": 100 + match_id, "duration_s": 1800,
           "game_mode": "ranked_all_pick", "abandoned": False,
           "sessions": sessions if sessions is not None else [
               {"player_slot": k, "hero_id": 1, "team": "radiant" if k < 5 else "dire",
                "purchases": [{"item_id": 1, "t_s": 10}, {"item_id": 2, "t_s": 20}]}
               for k in range(10)]}
    obj.update(over)
    return json.dumps(obj)


# -- ingestion ---------------------------------------------------------------------

def test_parse_one_line_ten_sessions():
    d, skipped = parse_matches([_line()], make_vocab(), make_heroes())
    assert len(d.matches) == 1 and d.n_sessions == 10 and not skipped
    assert d.matches[0].valid


def test_missing_field_names_field_and_line():
    bad = json.loads(_line(2))
    del bad["duration_s"]
    with pytest.raises(MatchFormatError) as exc:
        parse_matches([_line(1), json.dumps(bad)], make_vocab(), make_heroes())
    assert "duration_s" in str(exc.value) and "line 2" in str(exc.value)
    assert exc.value.line_no == 2


def test_lenient_mode_skips_and_reports():
    d, skipped = parse_matches([_line(1), "{not json", _line(3)], make_vocab(), make_heroes(), strict=False)
    assert [m.match_id for m in d.matches] == [1, 3]
    assert [e.line_no for e in skipped] == [2]


def test_unknown_item_marks_match_invalid():
    sessions = [{"player_slot": 0, "hero_id": 1, "team": "radiant",
                 "purchases": [{"item_id": 1, "t_s": 1}, {"item_id": 99, "t_s": 2}]}]
    d, _ = parse_matches([_line(sessions=sessions)], make_vocab(), make_heroes())
    m = d.matches[0]
    assert not m.valid and any("99" in i for i in m.issues)


def test_unknown_hero_and_bad_time_flagged():
    sessions = [{"player_slot": 0, "hero_id": 42, "team": "radiant",
                 "purchases": [{"item_id": 1, "t_s": 5000}]}]
    m = parse_matches([_line(sessions=sessions)], make_vocab(), make_heroes())[0].matches[0]
    assert any("hero" in i for i in m.issues) and any("outside" in i for i in m.issues)


@pytest.mark.parametrize("field,value", [("abandoned", "no"), ("game_mode", 3), ("sessions", {}),
                                         ("start_time", "x"), ("duration_s", 0)])
def test_schema_type_errors(field, value):
    with pytest.raises(MatchFormatError) as exc:
        parse_matches([_line(**{field: value})], make_vocab(), make_heroes())
    assert field in str(exc.value)


def test_vocab_invariants():
    with pytest.raises(ValueError):
        ItemVocab((ItemEntry(1, "a", True, False), ItemEntry(1, "b", True, False)))
    with pytest.raises(ValueError):
        ItemVocab((ItemEntry(0, "pad", True, False),))
    with pytest.raises(ValueError):
        ItemVocab((ItemEntry(1, "a", False, False),))


def test_corpus_round_trip(tmp_path, small_synth):
    d = small_synth[0]
    save_corpus(tmp_path, d)
    back, skipped = load_corpus(tmp_path)
    assert not skipped
    assert back.matches == d.matches and back.vocab == d.vocab and back.heroes == d.heroes
    assert dumps_matches(back) == dumps_matches(d)


def test_items_csv_rejects_bad_flag(tmp_path):
    (tmp_path / "items.csv").write_text("item_id,name,purchasable,consumable\n1,a,yes,0\n")
    with pytest.raises(DataError):
        read_items(tmp_path / "items.csv")
    (tmp_path / "heroes.csv").write_text("id,name\n1,a\n")
    with pytest.raises(DataError):
        read_heroes(tmp_path / "heroes.csv")


# -- preprocessing ---------------------------------------------------------------

def _ten(items=(1, 2)):
    return [list(items)] * 10


def test_short_session_discards_whole_match():
    bad = _ten()
    bad[3] = [1]
    d = Dataset(make_vocab(), make_heroes(), (make_match(1, _ten()), make_match(2, bad)))
    out = preprocess(d, trim_q=0)
    assert [m.match_id for m in out.matches] == [1]


def test_abandoned_wrong_mode_and_invalid_removed():
    non_purchasable = ItemVocab(make_vocab().entries + (ItemEntry(7, "courier", False, False),))
    matches = (make_match(1, _ten()), make_match(2, _ten(), abandoned=True),
               make_match(3, _ten(), mode="turbo"), make_match(4, _ten((1, 7))))
    report = []
    out = preprocess(Dataset(non_purchasable, make_heroes(), matches), trim_q=0, report=report)
    assert [m.match_id for m in out.matches] == [1]
    assert report[0] == FilterCounts(4, 1, 1, 1, 0, 0, 1)


def test_fewer_than_ten_sessions_kept():
    d = Dataset(make_vocab(), make_heroes(), (make_match(1, [[1, 2], [2, 3]]),))
    assert len(preprocess(d, trim_q=0).matches) == 1


def test_trim_removes_floor_nq_from_each_end():
    matches = tuple(make_match(i, _ten(), duration=600 + i) for i in range(1, 1001))
    out = preprocess(Dataset(make_vocab(), make_heroes(), matches), trim_q=0.025)
    durations = sorted(m.duration_s for m in out.matches)
    assert len(out.matches) == 950
    assert durations[0] == 600 + 26 and durations[-1] == 600 + 975


def test_result_sorted_by_start_time_and_stable():
    matches = (make_match(1, _ten(), start=50), make_match(2, _ten(), start=10),
               make_match(3, _ten(), start=10))
    out = preprocess(Dataset(make_vocab(), make_heroes(), matches), trim_q=0)
    assert [m.match_id for m in out.matches] == [2, 3, 1]


def test_empty_result_is_an_error():
    d = Dataset(make_vocab(), make_heroes(), (make_match(1, _ten(), abandoned=True),))
    with pytest.raises(DataError, match="empty"):
        preprocess(d)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), q=st.sampled_from([0.0, 0.025, 0.1, 0.3]))
def test_preprocess_invariants(seed, q):
    d, _ = generate(SynthSpec(n_matches=40, n_items=8, n_heroes=3, mean_ls=3, std_ls=2, seed=seed))
    once = preprocess(d, trim_q=q)
    assert preprocess(once, trim_q=q).matches == once.matches
    # idempotence is also a property of the content, not only of the marker
    assert preprocess(once.with_matches(once.matches), trim_q=0).matches == once.matches
    assert min(len(s) for s in once.sessions()) >= 2
    assert all(once.vocab.is_purchasable(i) for s in once.sessions() for i in s.items)
    starts = [m.start_time for m in once.matches]
    assert starts == sorted(starts)
    n_short = sum(1 for m in d.matches if any(len(s) < 2 for s in m.sessions))
    n = len(d.matches) - n_short
    assert len(once.matches) == n - 2 * int(np.floor(n * q))


# -- splitting ---------------------------------------------------------------------

@pytest.mark.parametrize("spec,sizes", [(DOTA350K_SPLIT, (94, 1, 5)), (OPENDOTA_SPLIT, (90, 5, 5))])
def test_split_sizes(spec, sizes):
    d = make_dataset([[1, 2]] * 100)
    parts = split_chronological(d, spec)
    assert tuple(len(p.matches) for p in parts) == sizes


def test_split_degenerate_is_error():
    with pytest.raises(DataError):
        split_chronological(make_dataset([[1, 2]] * 3), DOTA350K_SPLIT)


def test_split_requires_sorted_input():
    d = Dataset(make_vocab(), make_heroes(), tuple(make_match(i, [[1, 2]], start=100 - i) for i in range(10)))
    with pytest.raises(DataError):
        split_chronological(d, OPENDOTA_SPLIT)


def test_split_spec_validation():
    assert SplitSpec(0.94, 0.01, 0.05).train_frac == Fraction(94, 100)
    with pytest.raises(ValueError):
        SplitSpec(0.5, 0.5, 0.0)
    with pytest.raises(ValueError):
        SplitSpec(0.5, 0.3, 0.1)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(20, 300), cut=st.sampled_from([(0.94, 0.01, 0.05), (0.9, 0.05, 0.05),
                                                    (0.6, 0.2, 0.2), (0.8, 0.1, 0.1)]))
def test_split_partitions_matches(n, cut):
    d = make_dataset([[1, 2, 3]] * n)
    try:
        parts = split_chronological(d, SplitSpec(*cut))
    except DataError:
        assert int(n * cut[0]) == int(n * (cut[0] + cut[1])) or int(n * (cut[0] + cut[1])) == n
        return
    ids = [m.match_id for p in parts for m in p.matches]
    assert ids == [m.match_id for m in d.matches]
    assert sum(p.n_sessions for p in parts) == d.n_sessions
    assert parts[0].matches[-1].start_time <= parts[2].matches[0].start_time
    assert len(parts[0].matches) == int(Fraction(n) * Fraction(str(cut[0])))


# -- statistics ------------------------------------------------------------------

def test_stats_two_point_moments():
    s = compute_stats(make_dataset([[1, 2], [1, 2, 3, 4]]))
    assert s.mean_ls == 3.0 and s.std_ls == 1.0


def test_stats_item_freq():
    s = compute_stats(make_dataset([[1, 1, 2]]))
    assert s.item_freq == {1: 2, 2: 1} and sum(s.item_freq.values()) == 3


def test_stats_empty_is_error():
    with pytest.raises(DataError):
        compute_stats(Dataset(make_vocab(), make_heroes(), ()))


def test_kendall_examples():
    assert kendall_tau([1, 2, 3, 4], [1, 2, 3, 4]) == 1.0
    assert kendall_tau([1, 2, 3], [3, 2, 1]) == -1.0
    assert kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(4 / 6, abs=1e-12)
    with pytest.raises(ValueError):
        kendall_tau([1, 2], [1, 3])


def brute_tau(a, b):
    pos_a = {x: i for i, x in enumerate(a)}
    pos_b = {x: i for i, x in enumerate(b)}
    c = d = 0
    for x, y in itertools.combinations(a, 2):
        s = (pos_a[x] - pos_a[y]) * (pos_b[x] - pos_b[y])
        c += s > 0
        d += s < 0
    n = len(a)
    return (c - d) / (n * (n - 1) / 2)


@settings(max_examples=60, deadline=None)
@given(st.permutations(list(range(8))), st.permutations(list(range(8))))
def test_kendall_property(a, b):
    assert kendall_tau(a, b) == brute_tau(a, b)
    assert kendall_tau(a, a) == 1.0
    assert kendall_tau(a, a[::-1]) == -1.0


def test_frequency_ranking_breaks_ties_by_id():
    assert frequency_ranking({3: 5, 1: 2, 2: 5}, [1, 2, 3, 4]) == [2, 3, 1, 4]


def test_representativeness():
    d = make_dataset([[1, 2, 3], [1, 2], [4, 1]], n_items=4)
    r = validate_split_representativeness(d, d)
    assert r.tau_items == 1.0 and r.tau_heroes == 1.0 and r.all_items_present and r.all_heroes_present
    part = d.with_matches(d.matches[:2])
    assert not validate_split_representativeness(d, part).all_items_present


def test_representativeness_half_sample():
    d, _ = generate(SynthSpec(n_matches=400, n_items=30, n_heroes=10, seed=11))
    half = d.with_matches(d.matches[::2])
    assert validate_split_representativeness(d, half).tau_items >= 0.9


# -- plot data ---------------------------------------------------------------------

def _timed(times, item=1):
    from seqrec.dataset import MatchRecord, Session
    s = Session(0, 1, "radiant", tuple([item] * len(times)), tuple(times))
    return Dataset(make_vocab(), make_heroes(), (MatchRecord(1, 0, 1800, "ranked_all_pick", False, (s,)),))


def test_plot_hand_binning():
    rows = plot_data(_timed([30, 90, 95]), "item_purchase_time", bin_s=60, window_bins=1, item_id=1)
    assert rows == [(0, 1 / 3), (60, 2 / 3)]


def test_plot_single_event():
    rows = plot_data(_timed([130]), "item_purchase_time", bin_s=60, window_bins=1, item_id=1)
    assert rows == [(0, 0.0), (60, 0.0), (120, 1.0)]


def test_plot_no_events():
    with pytest.raises(DataError, match="no events"):
        plot_data(_timed([10]), "item_purchase_time", item_id=2)


def test_rolling_mean_properties():
    np.testing.assert_array_equal(rolling_mean(np.full(7, 0.25), 5), np.full(7, 0.25))
    np.testing.assert_allclose(rolling_mean([0, 3, 0, 0], 3), [1.5, 1.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        rolling_mean([1, 2], 4)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 1800), min_size=1, max_size=40))
def test_plot_sums(times):
    times = sorted(times)
    raw = plot_data(_timed(times), "item_purchase_time", bin_s=60, window_bins=1, item_id=1)
    assert abs(sum(v for _, v in raw) - 1.0) < 1e-12
    smooth = plot_data(_timed(times), "item_purchase_time", bin_s=60, window_bins=5, item_id=1)
    assert len(smooth) == len(raw)


def test_session_length_is_plain_histogram():
    d = make_dataset([[1, 2], [1, 2, 3], [1, 2, 3]])
    assert plot_data(d, "session_length", bin_s=1, window_bins=5) == [(0, 0.0), (1, 0.0), (2, 1 / 3), (3, 2 / 3)]


def test_plot_csv_format():
    assert plot_csv([(0, 0.5), (60, 0.5)]) == "bin_start_s,value\n0,0.5\n60,0.5\n"
