"""Keyword statistics over interrogated prompts.

Two counting conventions coexist on purpose: decade frequency series count a
word at most once per painting, while TF-IDF term frequencies keep raw
multiplicities.
"""

from __future__ import annotations

import json
import logging
import math
import re
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import PreconditionError
from .gateway.base import TOKEN_BUDGET
from .ingest import century_of

logger = logging.getLogger(__name__)

_SPLIT = re.compile(r"[\W_]+", re.UNICODE)
_KEYWORD = re.compile(r"^[a-z0-9]+$")
CANDIDATE_POOL = 100


class KeywordShortfallWarning(UserWarning):
    """A century has fewer surviving keywords than requested."""


@dataclass
class PromptDoc:
    painting_id: str
    decade: int
    raw_prompt: str
    keywords: list
    raw_counts: dict

    @property
    def century(self) -> int:
        return century_of(self.decade)


def tokenize_prompt(prompt: str) -> tuple:
    """Return ``(keywords, raw_counts)`` for a prompt.

    Splits on any non-alphanumeric character, lowercases, and drops tokens
    with characters outside ASCII letters and digits.
    """
    tokens = [t for t in _SPLIT.split((prompt or "").lower()) if t and _KEYWORD.match(t)]
    counts = Counter(tokens)
    keywords = list(dict.fromkeys(tokens))
    return keywords, dict(counts)


def make_doc(painting_id: str, decade: int, prompt: str) -> PromptDoc:
    keywords, counts = tokenize_prompt(prompt)
    return PromptDoc(painting_id, int(decade), prompt, keywords, counts)


# --------------------------------------------------------------------------
# decade frequencies and trends


@dataclass
class DecadeFrequencyTable:
    decades: list
    freq: dict  # word -> decade -> normalized frequency
    counts: dict  # word -> decade -> paintings containing the word

    def series(self, word: str) -> np.ndarray:
        row = self.freq.get(word, {})
        return np.array([row.get(d, 0.0) for d in self.decades])


def build_frequency_table(docs: Sequence[PromptDoc]) -> DecadeFrequencyTable:
    if not docs:
        raise PreconditionError("no prompt documents")
    counts = defaultdict(lambda: defaultdict(int))
    totals = defaultdict(int)
    for doc in docs:
        totals[doc.decade] += 0
        for w in set(doc.keywords):
            counts[w][doc.decade] += 1
            totals[doc.decade] += 1
    decades = sorted(totals)
    freq = {
        w: {d: c / totals[d] for d, c in by_decade.items()}
        for w, by_decade in counts.items()
    }
    return DecadeFrequencyTable(decades, freq, {w: dict(v) for w, v in counts.items()})


@dataclass
class TrendReport:
    slopes: dict
    support: dict
    most_increased: list
    most_decreased: list


def trend_slopes(table: DecadeFrequencyTable, min_support: int = 1, top: Optional[int] = None) -> TrendReport:
    """OLS slope (per year) of each word's normalized frequency against decade."""
    if len(table.decades) < 2:
        raise PreconditionError("trend slopes need at least two decades")
    x = np.asarray(table.decades, dtype=np.float64)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slopes, support = {}, {}
    for w in sorted(table.freq):
        total = int(sum(table.counts.get(w, {}).values()))
        if total < min_support:
            continue
        support[w] = total
        slopes[w] = float(xc @ table.series(w) / sxx)
    inc = sorted(slopes, key=lambda w: (-slopes[w], w))
    dec = sorted(slopes, key=lambda w: (slopes[w], w))
    if top is not None:
        inc, dec = inc[:top], dec[:top]
    return TrendReport(slopes, support, inc, dec)


# --------------------------------------------------------------------------
# TF-IDF


@dataclass
class TfidfTable:
    scores: list  # per doc: word -> score
    idf: dict
    normalized: bool


def tfidf_scores(docs: Sequence[PromptDoc], normalize: bool = True) -> TfidfTable:
    """tf * (ln((1 + n) / (1 + df)) + 1), optionally L2-normalised per document."""
    if not docs:
        raise PreconditionError("no prompt documents")
    n = len(docs)
    df = Counter()
    for doc in docs:
        df.update(set(doc.raw_counts))
    idf = {w: math.log((1 + n) / (1 + c)) + 1.0 for w, c in df.items()}
    scores = []
    for doc in docs:
        row = {w: tf * idf[w] for w, tf in doc.raw_counts.items()}
        if normalize and row:
            norm = math.sqrt(sum(v * v for v in row.values()))
            if norm > 0:
                row = {w: v / norm for w, v in row.items()}
        scores.append(row)
    return TfidfTable(scores, idf, normalize)


# --------------------------------------------------------------------------
# century keyword sets


@dataclass
class CenturyKeywordSet:
    century: int
    words: list
    scores: dict
    exclusion_log: list = field(default_factory=list)  # (word, reason)

    def to_dict(self) -> dict:
        return {
            "century": self.century,
            "words": [{"rank": i + 1, "word": w, "score": self.scores[w]} for i, w in enumerate(self.words)],
            "excluded": [{"word": w, "reason": r} for w, r in self.exclusion_log],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CenturyKeywordSet":
        words = [e["word"] for e in sorted(d["words"], key=lambda e: e["rank"])]
        scores = {e["word"]: float(e["score"]) for e in d["words"]}
        log = [(e["word"], e["reason"]) for e in d.get("excluded", [])]
        return cls(int(d["century"]), words, scores, log)


@dataclass
class Exclusions:
    artists: frozenset = frozenset()
    movements: frozenset = frozenset()

    @classmethod
    def from_names(cls, artist_names: Iterable[str] = (), movement_names: Iterable[str] = ()) -> "Exclusions":
        """Tokenize full names into the keyword vocabulary they would match."""
        def vocab(names):
            out = set()
            for name in names:
                out.update(tokenize_prompt(name)[0])
            return frozenset(out)

        return cls(vocab(artist_names), vocab(movement_names))

    def reason(self, word: str) -> Optional[str]:
        if word.isdigit():
            return "numeral"
        if word in self.artists:
            return "artist"
        if word in self.movements:
            return "movement"
        return None


def century_scores(docs: Sequence[PromptDoc], table: TfidfTable) -> dict:
    """Sum of TF-IDF scores per word per century: word -> century -> score."""
    agg = defaultdict(lambda: defaultdict(float))
    for doc, row in zip(docs, table.scores):
        c = doc.century
        for w, v in row.items():
            agg[w][c] += v
    return {w: dict(v) for w, v in agg.items()}


def assign_and_select_century_keywords(docs: Sequence[PromptDoc], exclusions: Exclusions = Exclusions(),
                                       n_words: int = TOKEN_BUDGET, pool: int = CANDIDATE_POOL,
                                       normalize: bool = True) -> dict:
    """Representative keywords per century.

    Each word belongs to the century where its summed TF-IDF peaks (earlier
    century on ties). Per century the top ``pool`` words by that sum are
    screened for artist names, movement names and numerals, and the best
    ``n_words`` survivors are kept.
    """
    if not docs:
        raise PreconditionError("no prompt documents")
    table = tfidf_scores(docs, normalize=normalize)
    agg = century_scores(docs, table)

    pools = defaultdict(list)
    for w in sorted(agg):
        by_c = agg[w]
        best = max(by_c.values())
        winners = sorted(c for c, v in by_c.items() if v == best)
        if len(winners) > 1:
            logger.info("word %r ties across centuries %s; assigned to %d", w, winners, winners[0])
        pools[winners[0]].append((w, best))

    out = {}
    for century in sorted({d.century for d in docs}):
        ranked = sorted(pools.get(century, []), key=lambda t: (-t[1], t[0]))[:pool]
        kept, log = [], []
        for w, _ in ranked:
            why = exclusions.reason(w)
            if why:
                log.append((w, why))
            else:
                kept.append(w)
        kept = kept[:n_words]
        if len(kept) < n_words:
            warnings.warn(
                f"century {century}: only {len(kept)} keywords survive (wanted {n_words})",
                KeywordShortfallWarning,
                stacklevel=2,
            )
        scores = {w: agg[w][century] for w in kept}
        out[century] = CenturyKeywordSet(century, kept, scores, log)
    return out


def build_prompt(kset: CenturyKeywordSet, separator: str = "space") -> str:
    if not kset.words:
        raise PreconditionError(f"century {kset.century} has no keywords")
    joiner = {"space": " ", "comma": ", "}.get(separator)
    if joiner is None:
        raise ValueError(f"separator must be 'space' or 'comma', not {separator!r}")
    return joiner.join(kset.words)


def save_keyword_sets(sets: Mapping[int, CenturyKeywordSet], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = [sets[c].to_dict() for c in sorted(sets)]
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_keyword_sets(path) -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {int(d["century"]): CenturyKeywordSet.from_dict(d) for d in payload}
