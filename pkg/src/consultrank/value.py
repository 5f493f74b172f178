"""Consultation value scoring and history filtering.

Each historical consultation is scored against a search session on three
axes, each normalized to [0, 1]:

* time value: exponential decay in the hours elapsed since the consultation,
* scope value: how many of the query's terms the consultation covers,
* action value: how strongly later consumer actions verified it, with the
  raw linked-action counts quantile-normalized and scarcer action types
  weighted up.

The three combine through a fixed convex mixture, and the top-scoring
consultations (up to a sequence cap) survive into model training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .corpus import (
    ActionType,
    Consultation,
    Corpus,
    CorpusError,
    Interaction,
    SearchSession,
    UserHistory,
    slice_before,
)
from .index import InvertedIndex, ScopeParams, build_index, scope_value
from .linkage import LinkageTable


@dataclass(frozen=True)
class ValueParams:
    """Scoring knobs.  Defaults are the tuned operating point."""

    alpha: float = 0.99
    lambda1: float = 0.5
    lambda2: float = 0.3
    l_seq: int = 30
    n_buckets: int = 11
    time_bucket_count: int = 13

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.l_seq <= 0:
            raise ValueError("l_seq must be positive")
        if self.n_buckets < 2:
            raise ValueError("n_buckets must be at least 2")
        if self.time_bucket_count < 2:
            raise ValueError("time_bucket_count must be at least 2")


@dataclass(frozen=True)
class BucketTable:
    """Per action type: the quantile cut points over linked-action counts."""

    cuts: Dict[ActionType, Tuple[int, ...]]
    n_buckets: int = 11

    def __post_init__(self):
        for atype, row in self.cuts.items():
            if list(row) != sorted(row):
                raise ValueError(f"cut points for {atype.value} are not sorted")


@dataclass(frozen=True)
class ValueReport:
    user_id: str
    search_ts: int
    cid: str
    o_time: float
    o_scope: float
    o_action: float
    o_aggregate: float
    rank: int


def time_decay_value(t_s: int, t_c: int, alpha: float) -> float:
    """alpha raised to the elapsed hours; 1.0 at zero elapsed time."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    if t_c > t_s:
        raise ValueError("consultation must not postdate the search")
    return alpha ** (t_s - t_c)


def time_bucket(delta_hours: int, b: int = 13) -> int:
    """Exponentially widening buckets over an hour gap, clamped to b of them.

    Gap 0 lands in bucket 0; each bucket covers twice the span of the one
    before ([1,2), [3,6], ...), so recent gaps are finely resolved and old
    ones coarsely.
    """
    if b < 2:
        raise ValueError("need at least two time buckets")
    if delta_hours < 0:
        raise ValueError("time gap cannot be negative")
    return min((delta_hours + 1).bit_length() - 1, b - 1)


def nearest_rank_cuts(sample: Sequence[int], n_buckets: int = 11) -> Tuple[int, ...]:
    """Quantile cut points at k/n_buckets for k = 1..n_buckets-1.

    Nearest-rank convention: cut k is the element at 1-based rank
    ceil(k*n/n_buckets) of the sorted sample.  Empty sample gives all-zero
    cuts.
    """
    if not sample:
        return (0,) * (n_buckets - 1)
    ordered = sorted(sample)
    n = len(ordered)
    # 1-based nearest rank ceil(k*n/n_buckets), via negated floor division
    return tuple(ordered[-(-k * n // n_buckets) - 1] for k in range(1, n_buckets))


def fit_buckets(linkage: LinkageTable, n_buckets: int = 11) -> BucketTable:
    """Fit per-action-type quantile cuts over the whole linkage table.

    The sample for an action type is the linked-action count of every
    consultation in the corpus, zeros included; fitting is global, not per
    user, because individual histories are far too sparse to carry their own
    quantiles.
    """
    samples: Dict[ActionType, List[int]] = {atype: [] for atype in ActionType}
    for user in sorted(linkage.links):
        for cid in sorted(linkage.links[user]):
            counts = {atype: 0 for atype in ActionType}
            for act, _rule in linkage.links[user][cid]:
                counts[act.action_type] += 1
            for atype in ActionType:
                samples[atype].append(counts[atype])
    return BucketTable(
        cuts={atype: nearest_rank_cuts(samples[atype], n_buckets) for atype in ActionType},
        n_buckets=n_buckets,
    )


def bucketize(freq: int, cuts: Sequence[int]) -> float:
    """Map a raw count to its quantile bucket, scaled into [0, 1].

    The bucket index is the number of cut points strictly below the count,
    so a count of zero in a mostly-zero distribution stays in bucket 0 and
    anything above the top cut saturates at 1.0.
    """
    if freq < 0:
        raise ValueError("frequency cannot be negative")
    bucket = sum(1 for c in cuts if c < freq)
    bucket = max(0, min(bucket, len(cuts)))
    return bucket / len(cuts)


def gamma_weights(posterior: Sequence[Interaction]) -> Dict[ActionType, float]:
    """Scarcity weights over the action types present in a posterior slice.

    Each present type gets weight proportional to the reciprocal of its
    count, normalized to sum to one, so rare actions (typically purchases)
    dominate.  An empty slice yields an empty map.
    """
    counts: Dict[ActionType, int] = {}
    for act in posterior:
        counts[act.action_type] = counts.get(act.action_type, 0) + 1
    if not counts:
        return {}
    denom = sum(1.0 / n for n in counts.values())
    return {atype: (1.0 / n) / denom for atype, n in counts.items()}


def action_value(
    c: Consultation,
    s_ts: int,
    linkage: LinkageTable,
    buckets: BucketTable,
    history: UserHistory,
) -> float:
    """Posterior verification score of one consultation at one search time.

    Only linked actions at or after the search timestamp count toward the
    frequencies, and only action types present in the posterior slice carry
    weight.  No posterior activity at all means no verification signal: 0.
    """
    posterior = [a for a in history.interactions if a.timestamp >= s_ts]
    gammas = gamma_weights(posterior)
    if not gammas:
        return 0.0
    linked = linkage.actions_for(history.user_id, c.id)
    total = 0.0
    for atype, gamma in sorted(gammas.items(), key=lambda kv: kv[0].value):
        freq = sum(
            1 for act, _rule in linked if act.action_type is atype and act.timestamp >= s_ts
        )
        total += gamma * bucketize(freq, buckets.cuts[atype])
    # Convex mixture of [0, 1] terms; clamp the last-bit rounding overshoot.
    return min(total, 1.0)


def aggregate_value(o_time: float, o_scope: float, o_action: float, p: ValueParams) -> float:
    """Convex mixture of the three component scores."""
    for name, v in (("o_time", o_time), ("o_scope", o_scope), ("o_action", o_action)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} out of range: {v}")
    return (1.0 - p.lambda1) * o_time + p.lambda1 * (
        p.lambda2 * o_scope + (1.0 - p.lambda2) * o_action
    )


def rank_and_filter(
    history: UserHistory,
    s: SearchSession,
    index: InvertedIndex,
    linkage: LinkageTable,
    buckets: BucketTable,
    params: ValueParams = ValueParams(),
    scope_params: ScopeParams = ScopeParams(),
) -> Tuple[List[Consultation], List[ValueReport]]:
    """Score, rank, and cap one user's consultation history for one search.

    Returns the kept consultations (at most l_seq, best first) and the full
    ranked report list for every scored consultation, kept or not.  Ties on
    the aggregate break toward recency, then lexically by consultation id,
    so reruns always produce the identical ordering.
    """
    before, _posterior = slice_before(history, s.timestamp)
    by_id = {c.id: c for c in before}
    scored: List[Tuple[float, int, str]] = []
    reports_raw: Dict[str, Tuple[float, float, float, float]] = {}
    for c in before:
        o_time = time_decay_value(s.timestamp, c.timestamp, params.alpha)
        o_scope = scope_value(index, c, scope_params)
        o_action = action_value(c, s.timestamp, linkage, buckets, history)
        o_agg = aggregate_value(o_time, o_scope, o_action, params)
        reports_raw[c.id] = (o_time, o_scope, o_action, o_agg)
        scored.append((o_agg, c.timestamp, c.id))
    scored.sort(key=lambda t: (-t[0], -t[1], t[2]))
    reports = [
        ValueReport(
            user_id=history.user_id,
            search_ts=s.timestamp,
            cid=cid,
            o_time=reports_raw[cid][0],
            o_scope=reports_raw[cid][1],
            o_action=reports_raw[cid][2],
            o_aggregate=reports_raw[cid][3],
            rank=pos + 1,
        )
        for pos, (_agg, _ts, cid) in enumerate(scored)
    ]
    kept = [by_id[cid] for _agg, _ts, cid in scored[: params.l_seq]]
    return kept, reports


@dataclass(frozen=True)
class SessionAssessment:
    """All value outputs for one (user, search session) pair."""

    user_id: str
    session: SearchSession
    kept: Tuple[Consultation, ...]
    reports: Tuple[ValueReport, ...]


def assess_corpus(
    corpus: Corpus,
    linkage: LinkageTable,
    buckets: BucketTable,
    params: ValueParams = ValueParams(),
    scope_params: ScopeParams = ScopeParams(),
    index: Optional[InvertedIndex] = None,
) -> List[SessionAssessment]:
    """Run rank_and_filter over every search session of every user."""
    if index is None:
        index = build_index(corpus)
    out: List[SessionAssessment] = []
    for user in sorted(corpus.users):
        history = corpus.users[user]
        for s in history.searches:
            kept, reports = rank_and_filter(
                history, s, index, linkage, buckets, params, scope_params
            )
            out.append(
                SessionAssessment(
                    user_id=user, session=s, kept=tuple(kept), reports=tuple(reports)
                )
            )
    return out


def report_record(r: ValueReport) -> dict:
    return {
        "user": r.user_id,
        "search_ts": r.search_ts,
        "cid": r.cid,
        "o_time": round(r.o_time, 6),
        "o_scope": round(r.o_scope, 6),
        "o_action": round(r.o_action, 6),
        "o_aggregate": round(r.o_aggregate, 6),
        "rank": r.rank,
    }


def dump_values(assessments: Sequence[SessionAssessment], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in assessments:
            for r in a.reports:
                fh.write(json.dumps(report_record(r), sort_keys=True) + "\n")


def load_assessments(path, corpus: Corpus, params: ValueParams = ValueParams()) -> List[SessionAssessment]:
    """Rebuild SessionAssessments from a `values.jsonl` dump.

    Scores come back 6-decimal rounded (the dump's precision); ranks and the
    kept set (rank <= l_seq) are exact.  Rows must match the corpus's
    (user, search timestamp, consultation id) triples."""
    rows: Dict[Tuple[str, int], List[ValueReport]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            try:
                report = ValueReport(
                    user_id=rec["user"], search_ts=rec["search_ts"], cid=rec["cid"],
                    o_time=rec["o_time"], o_scope=rec["o_scope"],
                    o_action=rec["o_action"], o_aggregate=rec["o_aggregate"],
                    rank=rec["rank"],
                )
            except KeyError as exc:
                raise CorpusError(f"{path}:{n}: value row missing {exc}") from exc
            rows.setdefault((report.user_id, report.search_ts), []).append(report)

    out: List[SessionAssessment] = []
    for user in sorted(corpus.users):
        history = corpus.users[user]
        by_id = {c.id: c for c in history.consultations}
        for s in history.searches:
            reports = rows.pop((user, s.timestamp), None)
            if reports is None:
                raise CorpusError(
                    f"{path}: no value rows for {user!r} search at t={s.timestamp}"
                )
            reports.sort(key=lambda r: r.rank)
            kept = []
            for r in reports[: params.l_seq]:
                if r.cid not in by_id:
                    raise CorpusError(
                        f"{path}: value row names unknown consultation {r.cid!r}"
                    )
                kept.append(by_id[r.cid])
            out.append(
                SessionAssessment(
                    user_id=user, session=s,
                    kept=tuple(kept), reports=tuple(reports),
                )
            )
    if rows:
        extra = next(iter(rows))
        raise CorpusError(
            f"{path}: value rows for {extra} do not match any corpus search"
        )
    return out


def score_histogram(assessments: Sequence[SessionAssessment], bins: int = 10) -> str:
    """Text histogram of aggregate scores, for quick corpus health checks."""
    scores = [r.o_aggregate for a in assessments for r in a.reports]
    if not scores:
        return "(no scored consultations)"
    counts = [0] * bins
    for s in scores:
        idx = min(int(s * bins), bins - 1)
        counts[idx] += 1
    peak = max(counts)
    lines = [f"aggregate score distribution over {len(scores)} consultations:"]
    for i, n in enumerate(counts):
        lo, hi = i / bins, (i + 1) / bins
        bar = "#" * (round(40 * n / peak) if peak else 0)
        lines.append(f"  [{lo:.1f},{hi:.1f}{']' if i == bins - 1 else ')'} {n:6d} {bar}")
    return "\n".join(lines)
