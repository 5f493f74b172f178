"""Small corpus-construction helpers shared across the test suite."""

import json

from consultrank.corpus import load_corpus
from consultrank.linkage import LinkageParams, build_linkage
from consultrank.value import ValueParams, assess_corpus, fit_buckets, report_record

PRODUCT_WORDS = [
    "laptop", "gaming", "phone", "folding", "case", "camera", "lens",
    "tripod", "stand", "silver", "carbon", "ultra", "sleeve", "mouse",
]
CHATTER_WORDS = [
    "politics", "weather", "election", "holiday", "recipe", "soup",
    "garden", "movie", "novel",
]
NOISE_WORDS = ["the", "and", "a", "x", "of", "to"]


def item(iid, title, attrs=()):
    return {"id": iid, "title": title, "attributes": list(attrs)}


def search(user, ts, query, gt):
    return {
        "user": user,
        "type": "search",
        "ts_hours": ts,
        "query": query,
        "ground_truth_item": gt,
    }


def click(user, ts, iid):
    return {"user": user, "type": "click", "ts_hours": ts, "item": iid}


def buy(user, ts, iid):
    return {"user": user, "type": "buy", "ts_hours": ts, "item": iid}


def consult(user, ts, cid, user_turn, assistant_turn=""):
    return {
        "user": user,
        "type": "consult",
        "ts_hours": ts,
        "cid": cid,
        "user_turn": user_turn,
        "assistant_turn": assistant_turn,
    }


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def corpus_from(tmp_path, items, events, tag=""):
    """Round the given dicts through real JSONL files and the real loader."""
    items_path = tmp_path / f"items{tag}.jsonl"
    events_path = tmp_path / f"events{tag}.jsonl"
    write_jsonl(items_path, items)
    write_jsonl(events_path, events)
    return load_corpus(items_path, events_path)


def _pick_words(rng, pool, n):
    return [pool[int(i)] for i in rng.choice(len(pool), size=n, replace=False)]


def random_micro_events(rng):
    """A random tiny catalog plus at most 20 events across 1-3 users.

    Texts are sampled so that every linking rule, the scope ramp, posterior
    slicing, and rank tie-breaking all get exercised across a batch of
    corpora: some consultations quote item titles verbatim, some share only
    a few terms, some are pure off-topic chatter, and timestamps collide
    often enough to hit the tie-break paths.
    """
    n_items = int(rng.integers(2, 6))
    items = []
    for i in range(n_items):
        title = " ".join(_pick_words(rng, PRODUCT_WORDS, int(rng.integers(1, 4))))
        attrs = _pick_words(rng, PRODUCT_WORDS, int(rng.integers(0, 3)))
        items.append(item(f"i{i}", title, attrs))

    users = [f"u{k}" for k in range(int(rng.integers(1, 4)))]
    horizon = int(rng.choice([48, 480]))
    cid_counter = 0
    events = []

    def consult_text():
        words = []
        if rng.random() < 0.55:
            it = items[int(rng.integers(n_items))]
            words += it["title"].split()
            if it["attributes"] and rng.random() < 0.5:
                words.append(it["attributes"][0])
        words += _pick_words(rng, CHATTER_WORDS, int(rng.integers(0, 3)))
        words += _pick_words(rng, NOISE_WORDS, int(rng.integers(0, 3)))
        return " ".join(words) if words else "empty says nothing"

    def query_text():
        if rng.random() < 0.5:
            return items[int(rng.integers(n_items))]["title"]
        return " ".join(
            _pick_words(rng, PRODUCT_WORDS + CHATTER_WORDS, int(rng.integers(2, 5)))
        )

    n_events = int(rng.integers(6, 21))
    for j in range(n_events):
        user = users[int(rng.integers(len(users)))]
        ts = int(rng.integers(0, horizon))
        if j == 0:
            kind = "consult"
        elif j == 1:
            kind = "search"
        else:
            kind = ["consult", "search", "click", "buy"][
                int(rng.choice(4, p=[0.35, 0.25, 0.25, 0.15]))
            ]
        if kind == "consult":
            events.append(consult(user, ts, f"c{cid_counter}", consult_text()))
            cid_counter += 1
        elif kind == "search":
            gt = items[int(rng.integers(n_items))]["id"]
            events.append(search(user, ts, query_text(), gt))
        else:
            iid = items[int(rng.integers(n_items))]["id"]
            row = click(user, ts, iid) if kind == "click" else buy(user, ts, iid)
            events.append(row)
    return items, events


def pipeline_reports(corpus, params=ValueParams(), window_days=14):
    """Run the full scoring pipeline; shape the output like the oracle's."""
    table = build_linkage(corpus, LinkageParams(window_days=window_days))
    buckets = fit_buckets(table, params.n_buckets)
    assessments = assess_corpus(corpus, table, buckets, params)
    out = []
    for a in assessments:
        rows = []
        for r in a.reports:
            rec = report_record(r)
            rec.pop("user")
            rec.pop("search_ts")
            rows.append(rec)
        out.append((a.user_id, a.session.timestamp, rows))
    return out
