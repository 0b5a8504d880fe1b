"""Reading and writing the line-oriented match format and the vocab CSVs.

Match file: UTF-8, one JSON object per line::

    {"match_id": 1, "start_time": 1587000000, "duration_s": 2400,
     "game_mode": "ranked_all_pick", "abandoned": false,
     "sessions": [{"player_slot": 0, "hero_id": 3, "team": "radiant",
                   "purchases": [{"item_id": 12, "t_s": 5}, ...]}, ...]}
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .model import (
    DataError, Dataset, HeroEntry, HeroVocab, ItemEntry, ItemVocab, MatchRecord, Session,
)

log = logging.getLogger(__name__)

MATCH_FIELDS = ("match_id", "start_time", "duration_s", "game_mode", "abandoned", "sessions")
SESSION_FIELDS = ("player_slot", "hero_id", "team", "purchases")
PURCHASE_FIELDS = ("item_id", "t_s")
TEAMS = ("radiant", "dire")

MATCHES_FILE = "matches.jsonl"
ITEMS_FILE = "items.csv"
HEROES_FILE = "heroes.csv"


class MatchFormatError(DataError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class LineError:
    line_no: int
    message: str


# -- vocab CSVs ---------------------------------------------------------------

def _flag(value, field, row_no):
    if value not in ("0", "1"):
        raise DataError(f"items.csv row {row_no}: {field} must be 0 or 1, got {value!r}")
    return value == "1"


def read_items(path) -> ItemVocab:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["item_id", "name", "purchasable", "consumable"]:
            raise DataError(f"{path}: unexpected header {reader.fieldnames}")
        entries = []
        for n, row in enumerate(reader, start=2):
            entries.append(ItemEntry(int(row["item_id"]), row["name"],
                                     _flag(row["purchasable"], "purchasable", n),
                                     _flag(row["consumable"], "consumable", n)))
    return ItemVocab(tuple(entries))


def read_heroes(path) -> HeroVocab:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["hero_id", "name"]:
            raise DataError(f"{path}: unexpected header {reader.fieldnames}")
        return HeroVocab(tuple(HeroEntry(int(r["hero_id"]), r["name"]) for r in reader))


def write_items(path, vocab: ItemVocab):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "name", "purchasable", "consumable"])
        for e in vocab.entries:
            w.writerow([e.item_id, e.name, int(e.purchasable), int(e.consumable)])


def write_heroes(path, heroes: HeroVocab):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hero_id", "name"])
        for e in heroes.entries:
            w.writerow([e.hero_id, e.name])


# -- match lines ----------------------------------------------------------------

def _require(obj, fields, line_no, where):
    if not isinstance(obj, dict):
        raise MatchFormatError(line_no, f"{where} must be an object")
    for f in fields:
        if f not in obj:
            raise MatchFormatError(line_no, f"missing field {f!r} in {where}")
    extra = set(obj) - set(fields)
    if extra:
        raise MatchFormatError(line_no, f"unexpected field(s) {sorted(extra)} in {where}")


def _int(value, field, line_no):
    if isinstance(value, bool) or not isinstance(value, int):
        raise MatchFormatError(line_no, f"field {field!r} must be an integer")
    return value


def _number(value, field, line_no):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MatchFormatError(line_no, f"field {field!r} must be a number")
    return value


def parse_match_line(text, line_no, vocab: ItemVocab, heroes: HeroVocab) -> MatchRecord:
    """Parse one line; schema violations raise, semantic problems go to ``issues``."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MatchFormatError(line_no, f"invalid JSON ({exc.msg})") from None
    _require(obj, MATCH_FIELDS, line_no, "match")
    match_id = _int(obj["match_id"], "match_id", line_no)
    start = _int(obj["start_time"], "start_time", line_no)
    duration = _int(obj["duration_s"], "duration_s", line_no)
    if duration <= 0:
        raise MatchFormatError(line_no, "field 'duration_s' must be positive")
    if not isinstance(obj["game_mode"], str):
        raise MatchFormatError(line_no, "field 'game_mode' must be a string")
    if not isinstance(obj["abandoned"], bool):
        raise MatchFormatError(line_no, "field 'abandoned' must be a boolean")
    if not isinstance(obj["sessions"], list):
        raise MatchFormatError(line_no, "field 'sessions' must be an array")

    issues = []
    if len(obj["sessions"]) > 10:
        issues.append(f"{len(obj['sessions'])} sessions (max 10)")
    sessions = []
    for s in obj["sessions"]:
        _require(s, SESSION_FIELDS, line_no, "session")
        slot = _int(s["player_slot"], "player_slot", line_no)
        if not 0 <= slot <= 9:
            raise MatchFormatError(line_no, "field 'player_slot' must be in 0..9")
        hero = _int(s["hero_id"], "hero_id", line_no)
        if s["team"] not in TEAMS:
            raise MatchFormatError(line_no, "field 'team' must be 'radiant' or 'dire'")
        if not isinstance(s["purchases"], list):
            raise MatchFormatError(line_no, "field 'purchases' must be an array")
        if hero not in heroes:
            issues.append(f"unknown hero_id {hero}")
        items, times = [], []
        for p in s["purchases"]:
            _require(p, PURCHASE_FIELDS, line_no, "purchase")
            item = _int(p["item_id"], "item_id", line_no)
            t = _number(p["t_s"], "t_s", line_no)
            if item not in vocab:
                issues.append(f"unknown item_id {item}")
            elif not vocab[item].purchasable:
                issues.append(f"non-purchasable item_id {item}")
            if not 0 <= t <= duration:
                issues.append(f"purchase time {t} outside [0, {duration}]")
            if times and t < times[-1]:
                issues.append(f"purchases out of time order in slot {slot}")
            items.append(item)
            times.append(t)
        sessions.append(Session(slot, hero, s["team"], tuple(items), tuple(times)))
    return MatchRecord(match_id, start, duration, obj["game_mode"], obj["abandoned"],
                       tuple(sessions), tuple(dict.fromkeys(issues)))


def parse_matches(lines, vocab: ItemVocab, heroes: HeroVocab, strict=True):
    """Parse an iterable of match lines, keeping input order and applying no filters.

    Returns ``(dataset, skipped)``.  With ``strict`` a malformed line raises
    :class:`MatchFormatError`; otherwise it is skipped and recorded in
    ``skipped`` as a :class:`LineError`.  Matches with unknown or
    non-purchasable items or unknown heroes are kept but carry ``issues``.
    """
    matches, skipped = [], []
    for line_no, text in enumerate(lines, start=1):
        if not text.strip():
            continue
        try:
            matches.append(parse_match_line(text, line_no, vocab, heroes))
        except MatchFormatError as exc:
            if strict:
                raise
            log.warning("%s", exc)
            skipped.append(LineError(line_no, str(exc)))
    for m in matches:
        if m.issues:
            log.info("match %s invalid: %s", m.match_id, "; ".join(m.issues))
    return Dataset(vocab, heroes, tuple(matches)), skipped


def match_to_json(m: MatchRecord) -> str:
    obj = {
        "match_id": m.match_id,
        "start_time": m.start_time,
        "duration_s": m.duration_s,
        "game_mode": m.game_mode,
        "abandoned": m.abandoned,
        "sessions": [
            {"player_slot": s.player_slot, "hero_id": s.hero_id, "team": s.team,
             "purchases": [{"item_id": i, "t_s": t} for i, t in zip(s.items, s.times)]}
            for s in m.sessions
        ],
    }
    return json.dumps(obj, separators=(",", ":"))


def write_matches(stream, dataset: Dataset):
    for m in dataset.matches:
        stream.write(match_to_json(m))
        stream.write("\n")


def dumps_matches(dataset: Dataset) -> str:
    buf = io.StringIO()
    write_matches(buf, dataset)
    return buf.getvalue()


def save_corpus(directory, dataset: Dataset, matches_file=MATCHES_FILE):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_items(d / ITEMS_FILE, dataset.vocab)
    write_heroes(d / HEROES_FILE, dataset.heroes)
    with open(d / matches_file, "w", encoding="utf-8", newline="\n") as fh:
        write_matches(fh, dataset)
    return d / matches_file


def load_corpus(directory, matches_file=MATCHES_FILE, strict=True):
    d = Path(directory)
    vocab = read_items(d / ITEMS_FILE)
    heroes = read_heroes(d / HEROES_FILE)
    with open(d / matches_file, encoding="utf-8") as fh:
        return parse_matches(fh, vocab, heroes, strict=strict)
