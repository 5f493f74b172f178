"""Training: the two contrastive losses, batching, Adam, early stopping.

Each optimization step draws a mini-batch of search sessions.  Every
session contributes a search loss (ground-truth item against uniformly
sampled negative items) and, when its user has linked consultation-action
pairs, one alignment-loss sample whose negatives come from the user's own
action pool first, topped up from other users in the batch and then
globally.  The total adds an L2 penalty over all parameters.  Validation
NDCG@10 gates early stopping and selects the returned checkpoint.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model as M
from . import tensor as T
from .corpus import Consultation, Corpus, Interaction, SearchSession
from .evaluate import ScoreFn, evaluate_sessions
from .linkage import LinkageTable
from .value import SessionAssessment


@dataclass(frozen=True)
class TrainConfig:
    tau1: float = 0.1
    tau2: float = 0.1
    lambda_va: float = 0.1
    lambda_l2: float = 1e-5
    n_neg_search: int = 10
    va_batch: int = 128
    batch_size: int = 72
    max_epochs: int = 100
    patience: int = 5
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise ValueError(
                f"temperatures must be positive, got tau1={self.tau1} tau2={self.tau2}"
            )
        if self.lambda_va < 0 or self.lambda_l2 < 0:
            raise ValueError("loss weights must be non-negative")
        for name in ("n_neg_search", "va_batch", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


@dataclass(frozen=True)
class Split:
    """Per-user leave-last-out split: last session tests, second-to-last
    validates, the rest train."""

    train: Tuple[Tuple[str, SearchSession], ...]
    valid: Tuple[Tuple[str, SearchSession], ...]
    test: Tuple[Tuple[str, SearchSession], ...]


def split_sessions(corpus: Corpus) -> Split:
    train: List[Tuple[str, SearchSession]] = []
    valid: List[Tuple[str, SearchSession]] = []
    test: List[Tuple[str, SearchSession]] = []
    for user in sorted(corpus.users):
        sessions = corpus.users[user].searches
        if not sessions:
            continue
        test.append((user, sessions[-1]))
        if len(sessions) >= 2:
            valid.append((user, sessions[-2]))
        train.extend((user, s) for s in sessions[:-2])
    return Split(train=tuple(train), valid=tuple(valid), test=tuple(test))


@dataclass(frozen=True)
class SessionExample:
    """Everything one forward pass needs, sliced strictly before the
    session's timestamp."""

    user_id: str
    session: SearchSession
    consultations: Tuple[Consultation, ...]
    cai_actions: Tuple[Interaction, ...]
    query_history: Tuple[str, ...]
    item_history: Tuple[str, ...]


KeptMap = Dict[Tuple[str, int], Tuple[Consultation, ...]]


def kept_consultations(assessments: Sequence[SessionAssessment]) -> KeptMap:
    return {(a.user_id, a.session.timestamp): a.kept for a in assessments}


def build_example(corpus: Corpus, user_id: str, session: SearchSession,
                  kept_map: Optional[KeptMap], l_seq: int = 30,
                  value_filter: bool = True) -> SessionExample:
    """Assemble one session's model inputs.

    With value_filter the consultation sequence is the value-ranked kept
    list; without it (the semantic-only ablation) it is simply the l_seq
    most recent prior consultations.
    """
    history = corpus.users[user_id]
    ts = session.timestamp
    priors = [c for c in history.consultations if c.timestamp < ts]
    if value_filter:
        if kept_map is None:
            raise ValueError("value_filter needs precomputed assessments")
        consultations = kept_map.get((user_id, ts), ())
    else:
        consultations = tuple(priors[-l_seq:])
    prior_actions = tuple(a for a in history.interactions if a.timestamp < ts)
    query_history = tuple(
        s.query.text for s in history.searches if s.timestamp < ts
    )[-l_seq:]
    item_history = tuple(
        a.target_item for a in prior_actions if a.target_item is not None
    )[-l_seq:]
    return SessionExample(
        user_id=user_id, session=session, consultations=tuple(consultations),
        cai_actions=prior_actions, query_history=query_history,
        item_history=item_history,
    )


def example_forward(model: M.Model, ex: SessionExample) -> T.Tensor:
    return M.session_forward(
        model, ex.user_id, ex.consultations, ex.cai_actions,
        ex.query_history, ex.item_history, ex.session.timestamp,
        ex.session.query.text,
    )


def sample_negative_items(item_ids: Sequence[str], positive: str, n: int,
                          rng: np.random.Generator) -> List[str]:
    """n uniform draws from the catalog excluding the positive; duplicates
    are possible and kept."""
    if len(item_ids) < 2:
        raise ValueError("need at least two items to sample negatives")
    out: List[str] = []
    while len(out) < n:
        v = item_ids[int(rng.integers(0, len(item_ids)))]
        if v != positive:
            out.append(v)
    return out


def loss_search(model: M.Model, e_final: T.Tensor, positive: str,
                negatives: Sequence[str], cfg: TrainConfig) -> T.Tensor:
    scores = M.score_candidates(model, e_final, [positive, *negatives])
    return T.nll_index(T.scale(scores, 1.0 / cfg.tau2), 0)


@dataclass(frozen=True)
class VaSample:
    """One alignment-loss instance: a linked pair plus sampled negative
    actions, anchored at a search-session timestamp.

    The anchor matches how the attention block sees history at inference:
    consultations and actions strictly before the session, time embeddings
    measured backward from the session."""

    consultation: Consultation
    positive: Interaction
    negatives: Tuple[Interaction, ...]
    anchor_ts: int


def loss_va(model: M.Model, samples: Sequence[VaSample], cfg: TrainConfig) -> T.Tensor:
    """Mean InfoNCE over alignment samples; the positive sits in its own
    denominator alongside the sampled negatives.  Logits carry the same
    1/sqrt(d) factor as the attention block, so the trained projections act
    at inference exactly as they were supervised."""
    if not samples:
        raise ValueError("loss_va needs at least one sample")
    cache: Dict[int, T.Tensor] = {}

    def key_vec(a: Interaction, anchor: int) -> T.Tensor:
        base = cache.get(id(a))
        if base is None:
            base = M.action_embedding(model, a)
            cache[id(a)] = base
        return T.add(base, M.time_embedding(model, anchor - a.timestamp))

    terms = []
    scale = 1.0 / (math.sqrt(model.cfg.d) * cfg.tau1)
    for s in samples:
        q = M.cai_query_vec(model, s.consultation, s.anchor_ts)
        keys = T.concat([key_vec(a, s.anchor_ts) for a in (s.positive, *s.negatives)])
        logits = T.matmul(
            T.matmul(keys, model.block.w_k), T.matmul(q, model.block.w_q)
        )
        terms.append(T.nll_index(T.scale(logits, scale), 0))
    return T.scale(reduce(T.add, terms), 1.0 / len(terms))


def l2_penalty(params: Sequence[T.Tensor]) -> T.Tensor:
    return reduce(T.add, [T.l2_norm_sq(p) for p in params])


def total_loss(l_search: T.Tensor, l_va: Optional[T.Tensor],
               params: Sequence[T.Tensor], cfg: TrainConfig) -> T.Tensor:
    total = l_search
    if l_va is not None and cfg.lambda_va > 0:
        total = T.add(total, T.scale(l_va, cfg.lambda_va))
    if cfg.lambda_l2 > 0:
        total = T.add(total, T.scale(l2_penalty(params), cfg.lambda_l2))
    return total


def linked_pairs(linkage: LinkageTable, corpus: Corpus) -> Dict[str, List[Tuple[Consultation, Interaction]]]:
    """Per-user (consultation, linked action) pairs in deterministic order."""
    out: Dict[str, List[Tuple[Consultation, Interaction]]] = {}
    for user in sorted(linkage.links):
        by_cid = {c.id: c for c in corpus.users[user].consultations}
        pairs: List[Tuple[Consultation, Interaction]] = []
        for cid in sorted(linkage.links[user]):
            for interaction, _rule in linkage.links[user][cid]:
                pairs.append((by_cid[cid], interaction))
        if pairs:
            out[user] = pairs
    return out


def sample_va_batch(batch: Sequence[SessionExample],
                    pairs_by_user: Dict[str, List[Tuple[Consultation, Interaction]]],
                    actions_by_user: Dict[str, Tuple[Interaction, ...]],
                    all_actions: Sequence[Interaction],
                    cfg: TrainConfig, rng: np.random.Generator,
                    kept_map: Optional[KeptMap] = None) -> List[VaSample]:
    """One alignment sample per batch example whose user has linked pairs
    that sit strictly before that example's session.

    Anchoring at the session keeps the supervised geometry identical to the
    inference-time one: queries and keys measure time backward from a later
    search.  Pairs whose consultation the value filter keeps at that session
    are preferred, since those are the consultations the attention block
    actually reads at inference; without any such pair (or without a kept
    map) the freshest linked consultation stands in.  Negatives: the user's
    other prior actions first, then prior actions of the other batch
    examples' users, then the global pool, up to va_batch in total, sampled
    without replacement within each tier.
    """
    samples: List[VaSample] = []
    batch_users = [ex.user_id for ex in batch]
    for ex in batch:
        user = ex.user_id
        anchor = ex.session.timestamp
        pairs = [
            (c, a) for c, a in pairs_by_user.get(user, ())
            if c.timestamp < anchor and a.timestamp < anchor
        ]
        if not pairs:
            continue
        kept_ids = (
            {c.id for c in kept_map.get((user, anchor), ())} if kept_map else set()
        )
        preferred = [(c, a) for c, a in pairs if c.id in kept_ids]
        if not preferred:
            newest = max(c.timestamp for c, _ in pairs)
            preferred = [(c, a) for c, a in pairs if c.timestamp == newest]
        pairs = preferred
        consultation, positive = pairs[int(rng.integers(0, len(pairs)))]

        def draw(pool: Sequence[Interaction], need: int) -> List[Interaction]:
            usable = [a for a in pool if a is not positive and a.timestamp < anchor]
            if len(usable) <= need:
                return usable
            chosen = rng.choice(len(usable), size=need, replace=False)
            return [usable[i] for i in sorted(chosen)]

        negatives = draw(actions_by_user[user], cfg.va_batch)
        if len(negatives) < cfg.va_batch:
            batch_pool = [
                a for other in batch_users if other != user
                for a in actions_by_user.get(other, ())
            ]
            negatives.extend(draw(batch_pool, cfg.va_batch - len(negatives)))
        if len(negatives) < cfg.va_batch:
            seen = set(map(id, negatives))
            spare = [a for a in all_actions if id(a) not in seen]
            negatives.extend(draw(spare, cfg.va_batch - len(negatives)))
        samples.append(VaSample(consultation, positive, tuple(negatives), anchor))
    return samples


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    l_search: float
    l_va: float
    total: float
    valid_ndcg10: float
    elapsed_seconds: float


@dataclass
class TrainResult:
    model: M.Model
    rows: List[EpochRow]
    best_epoch: int
    best_valid_ndcg10: float


def model_score_fn(model: M.Model, corpus: Corpus, kept_map: Optional[KeptMap],
                   l_seq: int = 30, value_filter: bool = True) -> ScoreFn:
    def score(user_id: str, session: SearchSession, candidates: Sequence[str]):
        ex = build_example(corpus, user_id, session, kept_map, l_seq, value_filter)
        e_final = example_forward(model, ex)
        return M.score_candidates(model, e_final, candidates).data.tolist()
    return score


def train(corpus: Corpus, linkage: LinkageTable,
          assessments: Sequence[SessionAssessment], model: M.Model,
          cfg: TrainConfig = TrainConfig(), l_seq: int = 30,
          value_filter: bool = True,
          log_path=None) -> TrainResult:
    """Mini-batch training with per-epoch validation and early stopping.

    Returns the model restored to its best-validation parameters plus the
    epoch log.  Fully deterministic for a fixed config seed.
    """
    split = split_sessions(corpus)
    if not split.train:
        raise ValueError("empty training set: no user has more than two sessions")
    kept_map = kept_consultations(assessments) if value_filter else None
    examples = [
        build_example(corpus, user, session, kept_map, l_seq, value_filter)
        for user, session in split.train
    ]
    pairs_by_user = linked_pairs(linkage, corpus) if cfg.lambda_va > 0 else {}
    actions_by_user = {u: corpus.users[u].interactions for u in sorted(corpus.users)}
    all_actions = [a for u in sorted(corpus.users) for a in actions_by_user[u]]
    params = model.parameters()
    opt = T.AdamState(params, lr=cfg.lr)
    # Independent streams per sampling role: toggling one loss term (say
    # lambda_va = 0) must not reshuffle the draws of the others.
    _order_ss, _neg_ss, _va_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_order = np.random.default_rng(_order_ss)
    rng_neg = np.random.default_rng(_neg_ss)
    rng_va = np.random.default_rng(_va_ss)
    n_neg_valid = min(99, len(corpus.items) - 1)

    rows: List[EpochRow] = []
    best_ndcg = -1.0
    best_epoch = 0
    best_params: Dict[str, np.ndarray] = {}
    started = time.perf_counter()

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng_order.permutation(len(examples))
        sum_search = 0.0
        sum_va = 0.0
        sum_total = 0.0
        n_batches = 0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [examples[i] for i in order[lo:lo + cfg.batch_size]]
            search_terms = []
            for ex in batch:
                e_final = example_forward(model, ex)
                negatives = sample_negative_items(
                    model.item_ids, ex.session.ground_truth_item,
                    cfg.n_neg_search, rng_neg,
                )
                search_terms.append(
                    loss_search(model, e_final, ex.session.ground_truth_item,
                                negatives, cfg)
                )
            l_search = T.scale(reduce(T.add, search_terms), 1.0 / len(search_terms))
            l_va = None
            if cfg.lambda_va > 0:
                va_samples = sample_va_batch(
                    batch, pairs_by_user,
                    actions_by_user, all_actions, cfg, rng_va,
                    kept_map=kept_map,
                )
                if va_samples:
                    l_va = loss_va(model, va_samples, cfg)
            total = total_loss(l_search, l_va, params, cfg)
            T.zero_grads(params)
            T.backward(total)
            T.adam_step(opt)
            sum_search += float(l_search.data)
            sum_va += float(l_va.data) if l_va is not None else 0.0
            sum_total += float(total.data)
            n_batches += 1

        if split.valid:
            report = evaluate_sessions(
                model_score_fn(model, corpus, kept_map, l_seq, value_filter),
                corpus, split.valid, protocol="ranking", seed=cfg.seed,
                n_neg=n_neg_valid,
            )
            valid_ndcg = report.macro["ndcg@10"]
        else:
            valid_ndcg = 0.0
        rows.append(EpochRow(
            epoch=epoch,
            l_search=sum_search / n_batches,
            l_va=sum_va / n_batches,
            total=sum_total / n_batches,
            valid_ndcg10=valid_ndcg,
            elapsed_seconds=time.perf_counter() - started,
        ))
        if valid_ndcg > best_ndcg:
            best_ndcg = valid_ndcg
            best_epoch = epoch
            best_params = {k: t.data.copy() for k, t in model.named_parameters().items()}
        if epoch - best_epoch >= cfg.patience:
            break

    if best_params:
        for name, t in model.named_parameters().items():
            t.data = best_params[name]
    if log_path is not None:
        write_epoch_log(rows, log_path)
    return TrainResult(model=model, rows=rows, best_epoch=best_epoch,
                       best_valid_ndcg10=best_ndcg)


def write_epoch_log(rows: Sequence[EpochRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "l_search", "l_va", "total", "valid_ndcg10", "elapsed_seconds"]
        )
        for r in rows:
            writer.writerow([
                r.epoch, f"{r.l_search:.6f}", f"{r.l_va:.6f}", f"{r.total:.6f}",
                f"{r.valid_ndcg10:.6f}", f"{r.elapsed_seconds:.3f}",
            ])
