"""Scenario-term inverted index and the scope score it supports.

The index maps every normalized token of every item's title and attributes
to the items carrying it.  That vocabulary doubles as the definition of
"on-topic": a consultation's scope score counts how many distinct catalog
terms it mentions, ramping linearly up to a saturation threshold.  A chat
about politics matches nothing and scores 0; a consultation naming a product
and a few of its attributes saturates at 1.

Normalization is deliberately blunt: lowercase, strip everything that is not
a letter or digit to spaces, split, drop stopwords and single-character
tokens.  Every component that compares text (this index, the action-linkage
rules, the lexical retrieval baseline) uses the same `normalize`, so their
vocabularies always agree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Set

from .corpus import Consultation, Corpus

# Compact English function-word list.  Kept short on purpose: consultation
# text is noisy chat, and aggressive stopping starts eating product terms.
STOPWORDS: frozenset = frozenset(
    """
    a an and are as at be but by can could do does for from had has have he
    her his how i if in is it its me my no not of on or our she should so
    than that the their them they this to was we were what when which who
    will with would you your
    """.split()
)

_KEEP = set("abcdefghijklmnopqrstuvwxyz0123456789 \t\n\r")


def normalize(text: str) -> List[str]:
    """Lowercase, strip punctuation, split, drop stopwords and 1-char tokens.

    Tokens keep their original order and multiplicity, so the result serves
    both as a sequence (contiguity matching) and, via set(), as a term bag.
    """
    lowered = text.lower()
    cleaned = "".join(ch if ch in _KEEP else " " for ch in lowered)
    return [tok for tok in cleaned.split() if len(tok) > 1 and tok not in STOPWORDS]


@dataclass(frozen=True)
class ScopeParams:
    lambda_thresh: int = 4

    def __post_init__(self):
        if self.lambda_thresh < 1:
            raise ValueError("lambda_thresh must be at least 1")


@dataclass
class InvertedIndex:
    """Term -> sorted item ids, over the whole catalog."""

    postings: Dict[str, List[str]]

    def term_count(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    @property
    def terms(self) -> Set[str]:
        return set(self.postings)


def build_index(corpus: Corpus) -> InvertedIndex:
    """Index every item under each normalized title/attribute token.

    Posting lists are deduplicated and sorted, so the index is identical no
    matter what order the items arrive in.
    """
    postings: Dict[str, Set[str]] = {}
    for iid in sorted(corpus.items):
        item = corpus.items[iid]
        text = " ".join([item.title, *item.attributes])
        for term in set(normalize(text)):
            postings.setdefault(term, set()).add(iid)
    return InvertedIndex(
        postings={term: sorted(ids) for term, ids in sorted(postings.items())}
    )


def matched_terms(index: InvertedIndex, c: Consultation) -> Set[str]:
    """Distinct index terms occurring as tokens in the consultation."""
    return set(normalize(c.text)) & index.terms


def scope_value(index: InvertedIndex, c: Consultation, p: ScopeParams = ScopeParams()) -> float:
    """Scope score in [0, 1]: matched-term count, ramped then saturated.

    Zero matches score 0, `lambda_thresh` or more score 1, linear between.
    The saturation reflects what the score is for: weeding out off-topic
    consultations, not discriminating among on-topic ones.
    """
    x = len(matched_terms(index, c))
    if x < p.lambda_thresh:
        return x / p.lambda_thresh
    return 1.0


def dump_index(index: InvertedIndex, path) -> None:
    """Write `index.jsonl`, one term per line, lexicographic and bit-stable."""
    with open(path, "w", encoding="utf-8") as fh:
        for term in sorted(index.postings):
            fh.write(
                json.dumps({"term": term, "items": index.postings[term]}, sort_keys=True)
                + "\n"
            )


def load_index(path) -> InvertedIndex:
    """Read an `index.jsonl` dump back into an InvertedIndex."""
    postings: Dict[str, List[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            try:
                postings[row["term"]] = list(row["items"])
            except (KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{n}: malformed index row ({exc})") from exc
    return InvertedIndex(postings)
