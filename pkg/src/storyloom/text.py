"""Tokenization, detokenization, vocabulary and corpus ingestion.

All downstream models consume lowercase whitespace-free tokens. The rule
tables here (punctuation splitting, contraction suffixes, attachment and
capitalization on output) are fixed so that behavior is reproducible
without external tokenizer binaries.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

# Special tokens, in serialization order. UNK must stay at id 0.
UNK_TOKEN = "<unk>"
PAD_TOKEN = "<pad>"
SEP_TITLE_TOKEN = "<title>"
SEP_PLAN_TOKEN = "<plan>"
EOP_TOKEN = "<eop>"  # end of storyline phrase
EOS_TOKEN = "<eos>"  # end of sentence
EOT_TOKEN = "<eot>"  # end of text

SPECIAL_TOKENS = (
    UNK_TOKEN,
    PAD_TOKEN,
    SEP_TITLE_TOKEN,
    SEP_PLAN_TOKEN,
    EOP_TOKEN,
    EOS_TOKEN,
    EOT_TOKEN,
)

UNK_ID = 0
PAD_ID = 1
SEP_TITLE_ID = 2
SEP_PLAN_ID = 3
EOP_ID = 4
EOS_ID = 5
EOT_ID = 6

SENTENCES_PER_STORY = 5

# Suffixes split off their stem during tokenization and re-attached
# without a space during detokenization.
CONTRACTION_SUFFIXES = ("n't", "'s", "'re", "'ve", "'ll", "'d", "'m")

_PUNCT_SPLIT = re.compile(r"([^\w\s'])")
_NT_SPLIT = re.compile(r"(?<=\w)(n't)(?=\s|$)")
_APO_SPLIT = re.compile(r"(?<=\w)('(?:s|re|ve|ll|d|m))(?=\s|$)")

_NO_SPACE_BEFORE = frozenset({".", ",", "!", "?", ";", ":", "'"}) | frozenset(
    CONTRACTION_SUFFIXES
)
_NO_SPACE_AFTER = frozenset({"(", "[", "{", "“", "‘"})
_SENTENCE_END = frozenset({".", "!", "?"})


class CorpusError(ValueError):
    """Raised for malformed corpus or vocabulary files."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split text into tokens.

    Punctuation becomes separate tokens; the standard English contraction
    suffixes are split off as their own tokens ("don't" -> do, n't).
    Idempotent modulo joining with spaces.
    """
    s = text.lower()
    s = _PUNCT_SPLIT.sub(r" \1 ", s)
    s = _NT_SPLIT.sub(r" \1", s)
    s = _APO_SPLIT.sub(r" \1", s)
    tokens: list[str] = []
    for chunk in s.split():
        tokens.extend(_peel_apostrophes(chunk))
    return tokens


def _peel_apostrophes(chunk: str) -> list[str]:
    # Leading/trailing apostrophes that are not contraction suffixes are
    # plain punctuation ("'hello" -> ', hello; "dogs'" -> dogs, ').
    if chunk in CONTRACTION_SUFFIXES:
        return [chunk]
    out: list[str] = []
    tail: list[str] = []
    while chunk.startswith("'") and len(chunk) > 1 and chunk not in CONTRACTION_SUFFIXES:
        out.append("'")
        chunk = chunk[1:]
    while chunk.endswith("'") and len(chunk) > 1 and chunk not in CONTRACTION_SUFFIXES:
        tail.append("'")
        chunk = chunk[:-1]
    out.append(chunk)
    out.extend(tail)
    return out


def detokenize(tokens: Sequence[str]) -> str:
    """Join tokens back into display text.

    Spaces go between tokens except before closing punctuation and
    contraction suffixes and after opening quotes/brackets. The first
    alphabetic character of the output and of each sentence is uppercased,
    and a standalone "i" becomes "I".
    """
    pieces: list[str] = []
    for tok in tokens:
        word = "I" if tok == "i" else tok
        if pieces and word not in _NO_SPACE_BEFORE and pieces[-1] not in _NO_SPACE_AFTER:
            pieces.append(" ")
        pieces.append(word)
    chars = list("".join(pieces))
    capitalize = True
    for i, ch in enumerate(chars):
        if ch.isalpha():
            if capitalize:
                chars[i] = ch.upper()
                capitalize = False
        elif ch in _SENTENCE_END:
            capitalize = True
    return "".join(chars)


@dataclass(frozen=True)
class StoryRecord:
    """A title plus exactly five tokenized sentences."""

    title: tuple[str, ...]
    sentences: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if not self.title:
            raise CorpusError("empty title")
        if len(self.sentences) != SENTENCES_PER_STORY:
            raise CorpusError(f"expected {SENTENCES_PER_STORY} sentences, got {len(self.sentences)}")
        if any(not s for s in self.sentences):
            raise CorpusError("empty sentence")


@dataclass
class Vocabulary:
    """Bijective token<->id map with the seven special tokens first.

    ``frequencies`` holds corpus counts when the vocabulary was built from
    a corpus; it is not serialized (id order already encodes the
    frequency-then-lexicographic ranking).
    """

    token_of: list[str]
    id_of: dict[str, int] = field(init=False)
    frequencies: dict[str, int] | None = None

    def __post_init__(self) -> None:
        if tuple(self.token_of[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise CorpusError("vocabulary must start with the special tokens")
        self.id_of = {tok: i for i, tok in enumerate(self.token_of)}
        if len(self.id_of) != len(self.token_of):
            raise CorpusError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.token_of)

    @property
    def size(self) -> int:
        return len(self.token_of)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def encode(self, tokens: Iterable[str]) -> list[int]:
        """Map tokens to ids; unknown tokens map to UNK. Never fails."""
        return [self.id_of.get(tok, UNK_ID) for tok in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        """Map ids back to tokens; out-of-range ids are an error."""
        out = []
        for i in ids:
            if not 0 <= i < len(self.token_of):
                raise CorpusError(f"invalid id {i}")
            out.append(self.token_of[i])
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.token_of) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise CorpusError("empty vocabulary file")
        return cls(token_of=lines)

    def content_hash(self) -> str:
        return hashlib.sha256("\n".join(self.token_of).encode("utf-8")).hexdigest()


def build_vocab(corpus: Sequence[StoryRecord], min_count: int = 1) -> Vocabulary:
    """Build a vocabulary from a corpus.

    Tokens with frequency >= min_count are kept; ids are assigned by
    descending frequency then lexicographic order, after the specials.
    """
    if not corpus:
        raise CorpusError("empty corpus")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for record in corpus:
        counts.update(record.title)
        for sentence in record.sentences:
            counts.update(sentence)
    kept = sorted(
        (tok for tok, n in counts.items() if n >= min_count and tok not in SPECIAL_TOKENS),
        key=lambda tok: (-counts[tok], tok),
    )
    freqs = {tok: counts[tok] for tok in kept}
    for special in SPECIAL_TOKENS:
        freqs.setdefault(special, 0)
    return Vocabulary(token_of=list(SPECIAL_TOKENS) + kept, frequencies=freqs)


def load_corpus(path: str | Path) -> list[StoryRecord]:
    """Load a tab-separated corpus: title then five sentences per line."""
    records: list[StoryRecord] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 1 + SENTENCES_PER_STORY:
            raise CorpusError(
                f"line {lineno}: expected {SENTENCES_PER_STORY} sentences, got {len(fields) - 1}"
            )
        title = tuple(tokenize(fields[0]))
        sentences = tuple(tuple(tokenize(f)) for f in fields[1:])
        if not title:
            raise CorpusError(f"line {lineno}: empty title")
        if any(not s for s in sentences):
            raise CorpusError(f"line {lineno}: empty sentence")
        records.append(StoryRecord(title=title, sentences=sentences))
    return records


def save_corpus(records: Sequence[StoryRecord], path: str | Path) -> None:
    lines = []
    for rec in records:
        fields = [" ".join(rec.title)] + [" ".join(s) for s in rec.sentences]
        lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
