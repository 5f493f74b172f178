"""Walk one tiny corpus through the whole consultation-value stack.

Builds a two-user corpus by hand, then shows every stage with its
intermediate numbers: the inverted index over catalog text, the
consultation-to-action linkage with the rule that fired, the frequency
buckets, and finally the per-search value reports with their time, scope,
and action components.

Run from the repository root:

    python3 demos/01_value_walkthrough.py
"""

import json
import tempfile
from pathlib import Path

from consultrank.corpus import load_corpus
from consultrank.index import build_index, matched_terms
from consultrank.linkage import LinkageParams, build_linkage
from consultrank.value import (
    ScopeParams,
    ValueParams,
    assess_corpus,
    fit_buckets,
)

ITEMS = [
    {"id": "i1", "title": "folding travel phone", "attributes": ["slim hinge"]},
    {"id": "i2", "title": "gaming laptop", "attributes": ["carbon lid"]},
    {"id": "i3", "title": "camera tripod stand", "attributes": ["aluminum legs"]},
]

# One user consults twice before searching: once on-topic about the phone
# (followed by a click and a purchase of it), once pure chatter.  The value
# scores at the later search should separate the two sharply.
EVENTS = [
    {"user": "ada", "type": "consult", "ts_hours": 10, "cid": "c-phone",
     "user_turn": "is the folding travel phone hinge durable",
     "assistant_turn": "the hinge is rated for years of daily folding"},
    {"user": "ada", "type": "consult", "ts_hours": 12, "cid": "c-chatter",
     "user_turn": "what soup recipe works for a rainy holiday",
     "assistant_turn": "a hearty lentil soup"},
    {"user": "ada", "type": "click", "ts_hours": 40, "item": "i1"},
    {"user": "ada", "type": "buy", "ts_hours": 45, "item": "i1"},
    {"user": "ada", "type": "search", "ts_hours": 60,
     "query": "folding phone", "ground_truth_item": "i1"},
    {"user": "ada", "type": "click", "ts_hours": 61, "item": "i1"},
    {"user": "bob", "type": "consult", "ts_hours": 20, "cid": "c-laptop",
     "user_turn": "which gaming laptop stays cool",
     "assistant_turn": "look for a carbon lid and a wide vent"},
    {"user": "bob", "type": "click", "ts_hours": 30, "item": "i2"},
    {"user": "bob", "type": "search", "ts_hours": 90,
     "query": "gaming laptop", "ground_truth_item": "i2"},
    {"user": "bob", "type": "click", "ts_hours": 91, "item": "i2"},
]


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def main():
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        write_jsonl(root / "items.jsonl", ITEMS)
        write_jsonl(root / "events.jsonl", EVENTS)
        corpus = load_corpus(root / "items.jsonl", root / "events.jsonl")

    print("== 1. corpus ==")
    print(f"{len(corpus.items)} items, {len(corpus.users)} users")
    for user in sorted(corpus.users):
        h = corpus.users[user]
        print(f"  {user}: {len(h.consultations)} consultations, "
              f"{len(h.searches)} searches, {len(h.interactions)} actions")

    print("\n== 2. inverted index over catalog text ==")
    index = build_index(corpus)
    for term in sorted(index.postings):
        print(f"  {term:10s} -> {index.postings[term]}")
    for user in sorted(corpus.users):
        for c in corpus.users[user].consultations:
            print(f"  consultation {c.id!r} matches terms "
                  f"{sorted(matched_terms(index, c)) or '(none)'}")

    print("\n== 3. consultation-to-action linkage ==")
    table = build_linkage(corpus, LinkageParams(window_days=14))
    for user in sorted(table.links):
        for cid, linked in sorted(table.links[user].items()):
            for action, rule in linked:
                print(f"  {user}/{cid} -> {action.action_type.value} "
                      f"at t={action.timestamp}h  (rule: {rule})")

    print("\n== 4. frequency buckets fitted on linked-action counts ==")
    params = ValueParams()
    buckets = fit_buckets(table, params.n_buckets)
    for name, cuts in sorted(buckets.cuts.items()):
        print(f"  {name:6s} cut points: {cuts}")

    print("\n== 5. per-search value reports ==")
    assessments = assess_corpus(corpus, table, buckets, params,
                                ScopeParams(), index=index)
    for a in assessments:
        print(f"  {a.user_id} searching at t={a.session.timestamp}h "
              f"({a.session.query.text!r}):")
        for r in a.reports:
            print(f"    rank {r.rank}: {r.cid:10s} aggregate {r.o_aggregate:.4f}"
                  f"  [time {r.o_time:.4f}  scope {r.o_scope:.4f}"
                  f"  action {r.o_action:.4f}]")
        print(f"    kept for the model: {[c.id for c in a.kept]}")

    print("\nThe on-topic consultation with linked purchase evidence wins on"
          "\nall three components; the chatter scores zero scope and zero"
          "\naction value and survives only through time decay.")


if __name__ == "__main__":
    main()
