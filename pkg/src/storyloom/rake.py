"""Storyline phrase extraction with degree/frequency keyword scoring.

Planner training data pairs each story title with one content phrase per
sentence. Candidate phrases are stopword-delimited token runs; word scores
are deg(w)/freq(w) computed over one story treated as a single document,
and a phrase scores the sum of its word scores.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .text import SENTENCES_PER_STORY, UNK_TOKEN, StoryRecord, tokenize

DEFAULT_MAX_PHRASE_LEN = 3


@dataclass(frozen=True)
class Phrase:
    tokens: tuple[str, ...]
    score: float = 0.0

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError("empty phrase")


@dataclass(frozen=True)
class StorylineRecord:
    """A title plus one extracted phrase per source sentence."""

    title: tuple[str, ...]
    phrases: tuple[Phrase, ...]

    def __post_init__(self) -> None:
        if len(self.phrases) != SENTENCES_PER_STORY:
            raise ValueError(f"expected {SENTENCES_PER_STORY} phrases, got {len(self.phrases)}")


def is_punctuation(token: str) -> bool:
    return not any(ch.isalnum() for ch in token)


def extract_candidates(
    sentence: Sequence[str], stopwords: frozenset[str] | set[str], max_len: int
) -> list[tuple[str, ...]]:
    """Split a sentence into candidate phrases.

    Maximal runs of non-stopword, non-punctuation tokens, each chunked
    left-to-right into pieces of at most max_len tokens.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    candidates: list[tuple[str, ...]] = []
    run: list[str] = []
    for tok in list(sentence) + [None]:  # type: ignore[list-item]
        if tok is None or tok in stopwords or is_punctuation(tok):
            for i in range(0, len(run), max_len):
                candidates.append(tuple(run[i : i + max_len]))
            run = []
        else:
            run.append(tok)
    return candidates


def score_phrases(candidates: Sequence[tuple[str, ...]]) -> list[Phrase]:
    """Score candidate phrases from one document.

    freq(w) counts candidate occurrences containing w; deg(w) sums the
    lengths of those occurrences; word score is deg/freq and a phrase
    scores the sum over its member words.
    """
    freq: Counter[str] = Counter()
    deg: Counter[str] = Counter()
    for cand in candidates:
        length = len(cand)
        for word in set(cand):
            freq[word] += 1
            deg[word] += length
    scored = []
    for cand in candidates:
        score = sum(deg[w] / freq[w] for w in cand)
        scored.append(Phrase(tokens=cand, score=score))
    return scored


def extract_storyline(
    record: StoryRecord,
    stopwords: frozenset[str] | set[str],
    max_len: int = DEFAULT_MAX_PHRASE_LEN,
) -> StorylineRecord:
    """Pick the highest-scoring candidate per sentence.

    Scores are computed over all five sentences as one document. Ties
    within a sentence go to the earliest starting candidate. A sentence
    with no candidates falls back to its most frequent non-stopword,
    non-punctuation token, or failing that to a one-token UNK phrase.
    """
    per_sentence = [extract_candidates(s, stopwords, max_len) for s in record.sentences]
    flat = [c for cands in per_sentence for c in cands]
    by_value: dict[tuple[str, ...], float] = {}
    for cand, phrase in zip(flat, score_phrases(flat)):
        by_value[cand] = phrase.score  # duplicates share one score by symmetry

    phrases: list[Phrase] = []
    for sentence, cands in zip(record.sentences, per_sentence):
        if cands:
            best = max(cands, key=lambda c: by_value[c])  # max() keeps the earliest on ties
            phrases.append(Phrase(tokens=best, score=by_value[best]))
        else:
            fallback = _fallback_token(sentence, stopwords)
            phrases.append(Phrase(tokens=(fallback,), score=0.0))
    return StorylineRecord(title=record.title, phrases=tuple(phrases))


def _fallback_token(sentence: Sequence[str], stopwords: frozenset[str] | set[str]) -> str:
    counts: Counter[str] = Counter(
        t for t in sentence if t not in stopwords and not is_punctuation(t)
    )
    if not counts:
        return UNK_TOKEN
    best = max(counts, key=lambda t: (counts[t], -sentence.index(t)))
    return best


def load_stopwords(path: str | Path) -> frozenset[str]:
    words = {
        line.strip()
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    }
    return frozenset(words)


def default_stopwords() -> frozenset[str]:
    """The stopword list bundled with the package."""
    from importlib import resources

    data = resources.files("storyloom.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in data.splitlines() if w.strip() and not w.startswith("#"))


def save_storylines(records: Sequence[StorylineRecord], path: str | Path) -> None:
    """Write storyline records in the corpus layout: title + 5 phrase fields."""
    lines = []
    for rec in records:
        fields = [" ".join(rec.title)] + [" ".join(p.tokens) for p in rec.phrases]
        lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_storylines(path: str | Path) -> list[StorylineRecord]:
    """Read storyline records written by save_storylines."""
    records = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 1 + SENTENCES_PER_STORY:
            raise ValueError(f"line {lineno}: expected {SENTENCES_PER_STORY} phrase fields")
        title = tuple(tokenize(fields[0]))
        phrases = tuple(Phrase(tokens=tuple(f.split())) for f in fields[1:])
        records.append(StorylineRecord(title=title, phrases=phrases))
    return records
