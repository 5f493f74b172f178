"""Brute-force reference implementations used to cross-check the library.

Everything here recomputes its answer straight from the defining formulas,
with no caching, no prefit tables, and no reuse of library internals beyond
the corpus data model and the text normalizer (which define input
conventions, not the math under test).  Slow and obvious on purpose.
"""

import math

from consultrank.corpus import ActionType
from consultrank.index import normalize

ACTION_NAMES = ("buy", "click", "search")


def _consultation_tokens(c):
    return normalize(c.user_turn + " " + c.assistant_turn)


def _action_footprint(a, corpus):
    if a.action_type is ActionType.SEARCH:
        return a.target_query.text
    it = corpus.items[a.target_item]
    return " ".join([it.title, *it.attributes])


def _is_linked(c_tokens, ti_tokens):
    """First-principles rerun of the three text-overlap linking rules."""
    n = len(ti_tokens)
    if n and any(
        c_tokens[i : i + n] == ti_tokens for i in range(len(c_tokens) - n + 1)
    ):
        return True
    distinct = set(ti_tokens)
    return bool(distinct) and len(distinct & set(c_tokens)) * 2 > len(distinct)


def linked_action_times(corpus, window_days=14):
    """(user, cid) -> {action name: [timestamps of linked actions]}."""
    out = {}
    for user in corpus.users:
        hist = corpus.users[user]
        for c in hist.consultations:
            c_tokens = _consultation_tokens(c)
            per = {name: [] for name in ACTION_NAMES}
            for a in hist.interactions:
                delta = a.timestamp - c.timestamp
                if delta < 0 or delta > window_days * 24:
                    continue
                ti_tokens = normalize(_action_footprint(a, corpus))
                if _is_linked(c_tokens, ti_tokens):
                    per[a.action_type.value].append(a.timestamp)
            out[(user, c.id)] = per
    return out


def quantile_cuts(sample, n_buckets=11):
    """Nearest-rank quantile cut points at k/n_buckets, k = 1..n_buckets-1."""
    if not sample:
        return [0] * (n_buckets - 1)
    ordered = sorted(sample)
    n = len(ordered)
    return [ordered[math.ceil(k * n / n_buckets) - 1] for k in range(1, n_buckets)]


def oracle_reports(
    corpus,
    alpha=0.99,
    lambda1=0.5,
    lambda2=0.3,
    lambda_thresh=4,
    window_days=14,
):
    """Value reports for every (user, search) pair, computed from scratch.

    Returns a list of (user, search_ts, rows) in sorted-user then
    session-time order, where each row dict carries the four scores rounded
    to 6 decimals plus the 1-based rank.
    """
    link_times = linked_action_times(corpus, window_days)
    cuts = {}
    for name in ACTION_NAMES:
        cuts[name] = quantile_cuts([len(per[name]) for per in link_times.values()])

    vocab = set()
    for it in corpus.items.values():
        vocab |= set(normalize(" ".join([it.title, *it.attributes])))

    results = []
    for user in sorted(corpus.users):
        hist = corpus.users[user]
        for s in hist.searches:
            posterior_counts = {}
            for a in hist.interactions:
                if a.timestamp >= s.timestamp:
                    name = a.action_type.value
                    posterior_counts[name] = posterior_counts.get(name, 0) + 1
            denom = sum(1.0 / v for v in posterior_counts.values())
            rows = []
            for c in hist.consultations:
                if c.timestamp >= s.timestamp:
                    continue
                o_time = alpha ** (s.timestamp - c.timestamp)
                x = len(set(_consultation_tokens(c)) & vocab)
                o_scope = x / lambda_thresh if x < lambda_thresh else 1.0
                o_action = 0.0
                for name, n_type in posterior_counts.items():
                    gamma = (1.0 / n_type) / denom
                    freq = sum(
                        1
                        for ts in link_times[(user, c.id)][name]
                        if ts >= s.timestamp
                    )
                    bucket = sum(1 for cp in cuts[name] if cp < freq)
                    o_action += gamma * (min(bucket, 10) / 10.0)
                o_agg = (1.0 - lambda1) * o_time + lambda1 * (
                    lambda2 * o_scope + (1.0 - lambda2) * o_action
                )
                rows.append((o_agg, c.timestamp, c.id, o_time, o_scope, o_action))
            rows.sort(key=lambda r: (-r[0], -r[1], r[2]))
            results.append(
                (
                    user,
                    s.timestamp,
                    [
                        {
                            "cid": cid,
                            "o_time": round(o_t, 6),
                            "o_scope": round(o_s, 6),
                            "o_action": round(o_a, 6),
                            "o_aggregate": round(agg, 6),
                            "rank": i + 1,
                        }
                        for i, (agg, _ts, cid, o_t, o_s, o_a) in enumerate(rows)
                    ],
                )
            )
    return results


def hit_rate_at(rank, k):
    return 1.0 if rank <= k else 0.0


def ndcg_at(rank, k):
    return 1.0 / math.log2(rank + 1) if rank <= k else 0.0


def mrr_at(rank, k):
    return 1.0 / rank if rank <= k else 0.0
