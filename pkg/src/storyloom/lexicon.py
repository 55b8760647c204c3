"""Taxonomy-backed out-of-vocabulary resolution.

Open-domain user input routinely contains words the models were not
trained on. Each unknown word is replaced by the nearest in-vocabulary
word reachable in a lexical taxonomy, searching hypernyms before hyponyms
level by level.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .text import UNK_TOKEN, Vocabulary

DEFAULT_MAX_DISTANCE = 10

PATH_SELF = "self"
PATH_HYPERNYM = "hypernym-first"
PATH_HYPONYM = "hyponym"


class TaxonomyError(ValueError):
    """Raised for malformed taxonomy files."""


@dataclass(frozen=True)
class TaxonomyGraph:
    """Synset nodes with hypernym edges and lemma membership.

    ``parents`` maps child synset -> hypernym synsets; ``children`` is the
    reverse. The hypernym relation must be acyclic.
    """

    synsets: frozenset[str]
    parents: dict[str, tuple[str, ...]]
    children: dict[str, tuple[str, ...]]
    lemma_synsets: dict[str, tuple[str, ...]]
    synset_lemmas: dict[str, tuple[str, ...]]

    @property
    def edge_count(self) -> int:
        return sum(len(ps) for ps in self.parents.values())


@dataclass(frozen=True)
class OovResolution:
    """Outcome of resolving one word against a vocabulary.

    ``replacement`` is UNK_TOKEN when nothing in-vocabulary was reachable;
    ``distance`` counts taxonomy levels traversed (0 for an in-vocabulary
    word) and is None for UNK, as is ``path_kind``.
    """

    replacement: str
    distance: int | None
    path_kind: str | None

    @property
    def resolved(self) -> bool:
        return self.replacement != UNK_TOKEN


def load_taxonomy(path: str | Path) -> TaxonomyGraph:
    """Load a taxonomy file: ``synset<TAB>lemma,...<TAB>hypernym,...``.

    The hypernym field may be empty for roots. Edges to undeclared synsets
    and hypernym cycles are errors.
    """
    synsets: list[str] = []
    lemmas_by_synset: dict[str, tuple[str, ...]] = {}
    raw_parents: dict[str, tuple[str, ...]] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) == 2:
            fields.append("")  # root synset, no hypernym field
        if len(fields) != 3:
            raise TaxonomyError(f"line {lineno}: expected 3 tab-separated fields")
        synset_id, lemma_field, parent_field = fields
        synset_id = synset_id.strip()
        if not synset_id:
            raise TaxonomyError(f"line {lineno}: empty synset id")
        if synset_id in lemmas_by_synset:
            raise TaxonomyError(f"line {lineno}: duplicate synset {synset_id!r}")
        lemmas = tuple(l.strip() for l in lemma_field.split(",") if l.strip())
        parents = tuple(p.strip() for p in parent_field.split(",") if p.strip())
        synsets.append(synset_id)
        lemmas_by_synset[synset_id] = lemmas
        raw_parents[synset_id] = parents

    declared = frozenset(synsets)
    for child, parents in raw_parents.items():
        for parent in parents:
            if parent not in declared:
                raise TaxonomyError(f"edge {child!r} -> {parent!r} targets undeclared synset")
    _check_acyclic(declared, raw_parents)

    children: dict[str, list[str]] = {s: [] for s in synsets}
    for child, parents in raw_parents.items():
        for parent in parents:
            children[parent].append(child)
    lemma_synsets: dict[str, list[str]] = {}
    for synset_id in synsets:
        for lemma in lemmas_by_synset[synset_id]:
            lemma_synsets.setdefault(lemma, []).append(synset_id)

    return TaxonomyGraph(
        synsets=declared,
        parents={s: raw_parents[s] for s in synsets},
        children={s: tuple(c) for s, c in children.items()},
        lemma_synsets={l: tuple(s) for l, s in lemma_synsets.items()},
        synset_lemmas=lemmas_by_synset,
    )


def _check_acyclic(synsets: frozenset[str], parents: dict[str, tuple[str, ...]]) -> None:
    # Kahn's algorithm over child->parent edges.
    indegree = {s: 0 for s in synsets}
    for ps in parents.values():
        for p in ps:
            indegree[p] += 1
    queue = [s for s, d in indegree.items() if d == 0]
    seen = 0
    while queue:
        node = queue.pop()
        seen += 1
        for parent in parents.get(node, ()):
            indegree[parent] -= 1
            if indegree[parent] == 0:
                queue.append(parent)
    if seen != len(synsets):
        raise TaxonomyError("hypernym cycle detected")


def resolve_oov(
    word: str,
    vocab: Vocabulary,
    graph: TaxonomyGraph,
    max_distance: int = DEFAULT_MAX_DISTANCE,
) -> OovResolution:
    """Find the nearest in-vocabulary replacement for a word.

    The search runs level by level over every synset containing the word:
    at each level d it first examines all synsets exactly d hypernym steps
    up, then all synsets exactly d hyponym steps down, returning the first
    in-vocabulary lemma found. Ties at a level resolve to the lemma with
    the lowest vocabulary id, which under the vocabulary builder's ordering
    means highest corpus frequency then lexicographic.
    """
    if max_distance < 0:
        raise ValueError("max_distance must be >= 0")
    if word in vocab:
        return OovResolution(replacement=word, distance=0, path_kind=PATH_SELF)
    start = graph.lemma_synsets.get(word, ())
    if not start or max_distance == 0:
        return OovResolution(replacement=UNK_TOKEN, distance=None, path_kind=None)

    up: set[str] = set(start)
    down: set[str] = set(start)
    for d in range(1, max_distance + 1):
        up = {p for s in up for p in graph.parents.get(s, ())}
        best = _best_lemma(up, vocab, graph)
        if best is not None:
            return OovResolution(replacement=best, distance=d, path_kind=PATH_HYPERNYM)
        down = {c for s in down for c in graph.children.get(s, ())}
        best = _best_lemma(down, vocab, graph)
        if best is not None:
            return OovResolution(replacement=best, distance=d, path_kind=PATH_HYPONYM)
        if not up and not down:
            break
    return OovResolution(replacement=UNK_TOKEN, distance=None, path_kind=None)


def _best_lemma(synsets: set[str], vocab: Vocabulary, graph: TaxonomyGraph) -> str | None:
    candidate_ids = [
        vocab.id_of[lemma]
        for s in synsets
        for lemma in graph.synset_lemmas.get(s, ())
        if lemma in vocab
    ]
    if not candidate_ids:
        return None
    return vocab.token_of[min(candidate_ids)]


def resolve_tokens(
    tokens: Sequence[str],
    vocab: Vocabulary,
    graph: TaxonomyGraph | None,
    max_distance: int = DEFAULT_MAX_DISTANCE,
) -> list[str]:
    """Resolve each token of a phrase independently.

    Tokens that cannot be resolved are kept as-is; encoding maps them to
    UNK downstream.
    """
    if graph is None:
        return list(tokens)
    out = []
    for tok in tokens:
        res = resolve_oov(tok, vocab, graph, max_distance)
        out.append(res.replacement if res.resolved else tok)
    return out
