"""Linking consultations to the consumer actions that follow them.

A consultation is "verified" by an action when the action's text footprint
(the search query, or the clicked/bought item's title and attributes) shows
up in the consultation within a bounded time window afterwards.  Three rules
decide the match, tried in order:

1. full-text: the action's entire normalized token sequence occurs
   contiguously in the consultation.
2. item-content-majority (clicks and buys): strictly more than half of the
   action's distinct tokens occur somewhere in the consultation.
3. query-term-majority (searches): the same majority test over query tokens.

The builder inverts action->consultation matches into a per-consultation
table, which downstream value scoring consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .corpus import ActionType, Consultation, Corpus, CorpusError, Interaction
from .index import normalize

RULE_FULL_TEXT = "full-text"
RULE_ITEM_MAJORITY = "item-content-majority"
RULE_QUERY_MAJORITY = "query-term-majority"


@dataclass(frozen=True)
class LinkageParams:
    window_days: int = 14

    def __post_init__(self):
        if self.window_days <= 0:
            raise ValueError("window_days must be positive")

    @property
    def window_hours(self) -> int:
        return self.window_days * 24


@dataclass
class LinkageTable:
    """user -> consultation-id -> time-sorted [(interaction, rule)] links."""

    links: Dict[str, Dict[str, List[Tuple[Interaction, str]]]] = field(default_factory=dict)

    def actions_for(self, user: str, cid: str) -> List[Tuple[Interaction, str]]:
        return self.links.get(user, {}).get(cid, [])


def action_text(interaction: Interaction, corpus: Corpus) -> str:
    """The text footprint of a consumer action.

    Searches are represented by their query; clicks and buys by the target
    item's title concatenated with its attributes.
    """
    if interaction.action_type is ActionType.SEARCH:
        return interaction.target_query.text
    item = corpus.items.get(interaction.target_item)
    if item is None:
        raise CorpusError(f"interaction references unknown item {interaction.target_item!r}")
    return " ".join([item.title, *item.attributes])


def _contains_contiguous(haystack: List[str], needle: List[str]) -> bool:
    if not needle or len(needle) > len(haystack):
        return False
    first = needle[0]
    limit = len(haystack) - len(needle)
    for i, tok in enumerate(haystack):
        if i > limit:
            break
        if tok == first and haystack[i : i + len(needle)] == needle:
            return True
    return False


def is_related(
    c: Consultation, interaction: Interaction, corpus: Corpus
) -> Tuple[bool, Optional[str]]:
    """Test the three matching rules in order; return the first that fires.

    An action whose text normalizes to nothing (all stopwords) links to
    nothing: the contiguity rule has no sequence to find and the majority
    rules have no tokens to count.
    """
    ti_tokens = normalize(action_text(interaction, corpus))
    c_tokens = normalize(c.text)
    if _contains_contiguous(c_tokens, ti_tokens):
        return True, RULE_FULL_TEXT
    distinct = set(ti_tokens)
    if distinct:
        present = len(distinct & set(c_tokens))
        if present * 2 > len(distinct):
            if interaction.action_type is ActionType.SEARCH:
                return True, RULE_QUERY_MAJORITY
            return True, RULE_ITEM_MAJORITY
    return False, None


def build_linkage(corpus: Corpus, params: LinkageParams = LinkageParams()) -> LinkageTable:
    """Link every consultation to its related actions within the window.

    For each user, each interaction is tested against every consultation in
    the `window_days` before it (inclusive of simultaneity); matches are
    inverted into the consultation-keyed table.  Per-consultation action
    lists come out time-sorted with deterministic tie order.
    """
    table: Dict[str, Dict[str, List[Tuple[Interaction, str]]]] = {}
    window = params.window_hours
    for user in sorted(corpus.users):
        history = corpus.users[user]
        per_cid: Dict[str, List[Tuple[Interaction, str]]] = {
            c.id: [] for c in history.consultations
        }
        for act in history.interactions:
            for c in history.consultations:
                delta = act.timestamp - c.timestamp
                if delta < 0 or delta > window:
                    continue
                ok, rule = is_related(c, act, corpus)
                if ok:
                    per_cid[c.id].append((act, rule))
        for cid in per_cid:
            per_cid[cid].sort(key=lambda pair: (pair[0].timestamp, _action_sort_key(pair[0])))
        table[user] = per_cid
    return LinkageTable(links=table)


def _action_sort_key(a: Interaction) -> Tuple[str, str]:
    target = a.target_query.text if a.action_type is ActionType.SEARCH else a.target_item
    return (a.action_type.value, target)


def link_record(user: str, cid: str, actions: List[Tuple[Interaction, str]]) -> dict:
    """One linkage table row in its serialized form."""
    return {
        "user": user,
        "cid": cid,
        "actions": [
            {
                "type": a.action_type.value,
                "ts_hours": a.timestamp,
                "target": (
                    a.target_query.text
                    if a.action_type is ActionType.SEARCH
                    else a.target_item
                ),
                "rule": rule,
            }
            for a, rule in actions
        ],
    }


def dump_linkage(table: LinkageTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for user in sorted(table.links):
            for cid in sorted(table.links[user]):
                rec = link_record(user, cid, table.links[user][cid])
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _action_lookup(corpus: Corpus) -> Dict[Tuple[str, str, int, str], Interaction]:
    """(user, type, ts, target) -> interaction, for rebinding dumped rows."""
    table: Dict[Tuple[str, str, int, str], Interaction] = {}
    for user in corpus.users:
        for a in corpus.users[user].interactions:
            target = (
                a.target_query.text
                if a.action_type is ActionType.SEARCH
                else a.target_item
            )
            table.setdefault((user, a.action_type.value, a.timestamp, target), a)
    return table


def load_linkage(path, corpus: Corpus) -> LinkageTable:
    """Read a `linkage.jsonl` dump, rebinding rows to corpus interactions.

    Every dumped action must exist in the corpus; a row that references an
    unknown user, consultation, or action means the dump and the corpus
    drifted apart and raises CorpusError."""
    lookup = _action_lookup(corpus)
    cids = {
        user: {c.id for c in corpus.users[user].consultations}
        for user in corpus.users
    }
    links: Dict[str, Dict[str, List[Tuple[Interaction, str]]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            user, cid = rec["user"], rec["cid"]
            if user not in corpus.users or cid not in cids.get(user, ()):
                raise CorpusError(
                    f"{path}:{n}: linkage row for unknown {user!r}/{cid!r}"
                )
            actions: List[Tuple[Interaction, str]] = []
            for row in rec["actions"]:
                key = (user, row["type"], row["ts_hours"], row["target"])
                interaction = lookup.get(key)
                if interaction is None:
                    raise CorpusError(
                        f"{path}:{n}: linkage row references an action absent "
                        f"from the corpus: {key}"
                    )
                actions.append((interaction, row["rule"]))
            links.setdefault(user, {})[cid] = actions
    return LinkageTable(links)
