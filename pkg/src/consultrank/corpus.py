"""Timestamped user-history data model and JSONL ingestion.

A corpus is a set of items plus, per user, three time-ordered event lists:
search sessions, consultations (user/assistant dialogue turns), and raw
interactions.  Search sessions are themselves interactions, so the
interaction list always contains the search events as well.

Timestamps are integer hours since an arbitrary epoch; sub-hour inputs are
floored on ingestion.  All structures are immutable after loading and safe
for concurrent readers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional


class CorpusError(ValueError):
    """Raised for schema violations, dangling references or parse errors."""


class ActionType(str, Enum):
    SEARCH = "search"
    CLICK = "click"
    BUY = "buy"


@dataclass(frozen=True)
class Item:
    id: str
    title: str
    attributes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.title:
            raise CorpusError(f"item {self.id!r} has an empty title")


@dataclass(frozen=True)
class Query:
    text: str
    timestamp: int

    def __post_init__(self):
        if not self.text:
            raise CorpusError("query text must be non-empty")
        _check_ts(self.timestamp)


@dataclass(frozen=True)
class Interaction:
    """One consumer action: a search, a click, or a purchase.

    Exactly one of ``target_item`` / ``target_query`` is set, determined by
    the action type (click/buy carry an item id, search carries the query).
    """

    action_type: ActionType
    timestamp: int
    target_item: Optional[str] = None
    target_query: Optional[Query] = None

    def __post_init__(self):
        _check_ts(self.timestamp)
        if self.action_type is ActionType.SEARCH:
            if self.target_query is None or self.target_item is not None:
                raise CorpusError("search interaction must carry a query and no item")
        else:
            if self.target_item is None or self.target_query is not None:
                raise CorpusError(
                    f"{self.action_type.value} interaction must carry an item and no query"
                )


@dataclass(frozen=True)
class SearchSession:
    """A query together with its search action and the item that resolved it."""

    query: Query
    interaction: Interaction
    ground_truth_item: str

    def __post_init__(self):
        if self.interaction.action_type is not ActionType.SEARCH:
            raise CorpusError("session interaction must be of type search")
        if self.interaction.timestamp != self.query.timestamp:
            raise CorpusError("session interaction and query timestamps differ")

    @property
    def timestamp(self) -> int:
        return self.query.timestamp


@dataclass(frozen=True)
class Consultation:
    """One user/assistant exchange.  Multi-turn dialogues are ingested as
    several consultations sharing an id prefix."""

    id: str
    user_turn: str
    assistant_turn: str
    timestamp: int

    def __post_init__(self):
        if not self.user_turn and not self.assistant_turn:
            raise CorpusError(f"consultation {self.id!r} has two empty turns")
        _check_ts(self.timestamp)

    @property
    def text(self) -> str:
        """Both turns joined; this is the text all matching rules run on."""
        return f"{self.user_turn} {self.assistant_turn}".strip()


@dataclass(frozen=True)
class UserHistory:
    user_id: str
    searches: tuple[SearchSession, ...] = ()
    consultations: tuple[Consultation, ...] = ()
    interactions: tuple[Interaction, ...] = ()


@dataclass(frozen=True)
class Corpus:
    items: dict[str, Item] = field(default_factory=dict)
    users: dict[str, UserHistory] = field(default_factory=dict)


def _check_ts(ts) -> None:
    if not isinstance(ts, int) or isinstance(ts, bool) or ts < 0:
        raise CorpusError(f"timestamp must be a non-negative integer, got {ts!r}")


def floor_hours(raw) -> int:
    """Coerce a raw hour value to the integer-hour grid (sub-hour floored)."""
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise CorpusError(f"ts_hours must be a number, got {raw!r}")
    hours = int(math.floor(raw))
    if hours < 0:
        raise CorpusError(f"ts_hours must be non-negative, got {raw!r}")
    return hours


def _read_jsonl(path) -> Iterable[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def build_corpus(item_records: Iterable[dict], event_records: Iterable[dict]) -> Corpus:
    """Assemble and validate a Corpus from already-parsed record dicts.

    Events are grouped per user and stably sorted by timestamp, so
    non-monotone input order is tolerated.  Dangling item references and
    duplicate consultation ids are rejected.  Raised errors carry the
    0-based record position as ``#<n>`` so file loaders can map them back
    to line numbers.
    """
    items: dict[str, Item] = {}
    for pos, obj in enumerate(item_records):
        try:
            item = Item(
                id=_req_str(obj, "id"),
                title=_req_str(obj, "title"),
                attributes=tuple(obj.get("attributes") or ()),
            )
            if item.id in items:
                raise CorpusError(f"duplicate item id {item.id!r}")
        except CorpusError as exc:
            raise CorpusError(f"item record #{pos}: {exc}") from exc
        items[item.id] = item

    searches: dict[str, list[SearchSession]] = {}
    consults: dict[str, list[Consultation]] = {}
    inters: dict[str, list[Interaction]] = {}
    seen_cids: dict[str, set[str]] = {}

    for pos, obj in enumerate(event_records):
        try:
            user = _req_str(obj, "user")
            etype = _req_str(obj, "type")
            ts = floor_hours(obj.get("ts_hours"))
            if etype == "search":
                query = Query(text=_req_str(obj, "query"), timestamp=ts)
                gt = _req_str(obj, "ground_truth_item")
                if gt not in items:
                    raise CorpusError(f"ground_truth_item {gt!r} not in items")
                act = Interaction(ActionType.SEARCH, ts, target_query=query)
                searches.setdefault(user, []).append(SearchSession(query, act, gt))
                inters.setdefault(user, []).append(act)
            elif etype in ("click", "buy"):
                iid = _req_str(obj, "item")
                if iid not in items:
                    raise CorpusError(f"item {iid!r} not in items")
                inters.setdefault(user, []).append(
                    Interaction(ActionType(etype), ts, target_item=iid)
                )
            elif etype == "consult":
                cid = _req_str(obj, "cid")
                if cid in seen_cids.setdefault(user, set()):
                    raise CorpusError(f"duplicate consultation id {cid!r} for user {user!r}")
                seen_cids[user].add(cid)
                consults.setdefault(user, []).append(
                    Consultation(
                        id=cid,
                        user_turn=obj.get("user_turn", "") or "",
                        assistant_turn=obj.get("assistant_turn", "") or "",
                        timestamp=ts,
                    )
                )
            else:
                raise CorpusError(f"unknown event type {etype!r}")
        except CorpusError as exc:
            raise CorpusError(f"event record #{pos}: {exc}") from exc

    # Full (not just stable) sort keys make the stored order canonical:
    # any permutation of the input records builds the identical Corpus.
    def _act_key(a: Interaction):
        target = a.target_query.text if a.target_query else a.target_item
        return (a.timestamp, a.action_type.value, target)

    users: dict[str, UserHistory] = {}
    for user in sorted(set(searches) | set(consults) | set(inters)):
        users[user] = UserHistory(
            user_id=user,
            searches=tuple(
                sorted(
                    searches.get(user, []),
                    key=lambda s: (s.timestamp, s.query.text, s.ground_truth_item),
                )
            ),
            consultations=tuple(
                sorted(consults.get(user, []), key=lambda c: (c.timestamp, c.id))
            ),
            interactions=tuple(sorted(inters.get(user, []), key=_act_key)),
        )
    return Corpus(items=items, users=users)


def load_corpus(items_path, events_path) -> Corpus:
    """Load ``items.jsonl`` + ``events.jsonl`` into a validated Corpus."""
    item_rows = list(_read_jsonl(items_path))
    event_rows = list(_read_jsonl(events_path))
    try:
        return build_corpus((obj for _ln, obj in item_rows), (obj for _ln, obj in event_rows))
    except CorpusError as exc:
        msg = str(exc)
        for prefix, rows, path in (
            ("item record #", item_rows, items_path),
            ("event record #", event_rows, events_path),
        ):
            if msg.startswith(prefix):
                pos_text, _, rest = msg[len(prefix):].partition(": ")
                lineno = rows[int(pos_text)][0]
                raise CorpusError(f"{path}:{lineno}: {rest}") from exc
        raise


def _req_str(obj: dict, key: str) -> str:
    val = obj.get(key)
    if not isinstance(val, str) or not val:
        raise CorpusError(f"missing or empty field {key!r}")
    return val


def slice_before(history: UserHistory, t: int) -> tuple[list[Consultation], list[Interaction]]:
    """Split a history around a search timestamp.

    Returns the consultations strictly before ``t`` and the interactions at
    or after ``t``; both preserve their stored order.  The strict "before"
    keeps a consultation from being valued by a search it coincides with.
    """
    before = [c for c in history.consultations if c.timestamp < t]
    after = [a for a in history.interactions if a.timestamp >= t]
    return before, after


def item_event(item: Item) -> dict:
    return {"id": item.id, "title": item.title, "attributes": list(item.attributes)}


def user_events(history: UserHistory) -> list[dict]:
    """Flatten one user's history back into event dicts, time-sorted.

    Search interactions are emitted once (through their session); clicks and
    buys come from the interaction list.
    """
    events: list[tuple[int, int, dict]] = []
    for s in history.searches:
        events.append(
            (
                s.timestamp,
                0,
                {
                    "user": history.user_id,
                    "type": "search",
                    "ts_hours": s.timestamp,
                    "query": s.query.text,
                    "ground_truth_item": s.ground_truth_item,
                },
            )
        )
    for a in history.interactions:
        if a.action_type is ActionType.SEARCH:
            continue
        events.append(
            (
                a.timestamp,
                1,
                {
                    "user": history.user_id,
                    "type": a.action_type.value,
                    "ts_hours": a.timestamp,
                    "item": a.target_item,
                },
            )
        )
    for c in history.consultations:
        events.append(
            (
                c.timestamp,
                2,
                {
                    "user": history.user_id,
                    "type": "consult",
                    "ts_hours": c.timestamp,
                    "cid": c.id,
                    "user_turn": c.user_turn,
                    "assistant_turn": c.assistant_turn,
                },
            )
        )
    events.sort(key=lambda e: (e[0], e[1], json.dumps(e[2], sort_keys=True)))
    return [e[2] for e in events]


def dump_corpus(corpus: Corpus, items_path, events_path) -> None:
    """Write a corpus back to canonical JSONL (stable across reruns)."""
    with open(items_path, "w", encoding="utf-8") as fh:
        for iid in sorted(corpus.items):
            fh.write(json.dumps(item_event(corpus.items[iid]), sort_keys=True) + "\n")
    with open(events_path, "w", encoding="utf-8") as fh:
        for user in sorted(corpus.users):
            for ev in user_events(corpus.users[user]):
                fh.write(json.dumps(ev, sort_keys=True) + "\n")
