"""Storyline planning and the three story writer systems.

The planner samples storyline phrases; writers decode sentences with beam
search. The three writers share one mechanism: title2story conditions on
the topic alone, planwrite adds the storyline, and planrevise is planwrite
with discriminator re-ranking attached to the beam. Sentences decode one
at a time so single-sentence and full-story requests share a code path.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

from .decoding import (
    DecodeParams,
    MAX_PHRASE_TOKENS,
    beam_search,
    sample_sequence,
)
from .discriminators import BilinearRescorer, DiscriminatorModel, RerankWeights
from .lexicon import DEFAULT_MAX_DISTANCE, TaxonomyGraph, resolve_tokens
from .lm import ConditionalLM, GenerationContext, STAGE_PLAN
from .rake import StorylineRecord
from .text import (
    EOP_ID,
    EOS_ID,
    EOT_ID,
    PAD_ID,
    SENTENCES_PER_STORY,
    SEP_PLAN_ID,
    SEP_TITLE_ID,
    StoryRecord,
    Vocabulary,
    tokenize,
)

TEMPERATURE_BOUNDS = (0.1, 2.0)
DEFAULT_PLAN_TEMPERATURE = 0.5
MAX_PHRASE_RESAMPLES = 25

# Structural separators must never appear inside a phrase or sentence.
_STRUCTURAL_BANS = frozenset(
    {(PAD_ID,), (SEP_TITLE_ID,), (SEP_PLAN_ID,), (EOT_ID,)}
)


class GenerationError(RuntimeError):
    pass


class ModelChoice(str, Enum):
    TITLE_TO_STORY = "title2story"
    PLAN_AND_WRITE = "planwrite"
    PLAN_AND_REVISE = "planrevise"

    @classmethod
    def order(cls) -> tuple["ModelChoice", ...]:
        return (cls.TITLE_TO_STORY, cls.PLAN_AND_WRITE, cls.PLAN_AND_REVISE)


@dataclass(frozen=True)
class DiversitySettings:
    """Softmax temperatures exposed to users as diversity knobs."""

    plan_temperature: float = DEFAULT_PLAN_TEMPERATURE
    story_temperature: float | None = None  # None = pure beam search

    def validate(self, bounds: tuple[float, float] = TEMPERATURE_BOUNDS) -> None:
        lo, hi = bounds
        if not lo <= self.plan_temperature <= hi:
            raise ValueError(f"plan temperature outside [{lo}, {hi}]")
        if self.story_temperature is not None and not lo <= self.story_temperature <= hi:
            raise ValueError(f"story temperature outside [{lo}, {hi}]")


Phrase = tuple[str, ...]
Sentence = tuple[str, ...]


def subseed(seed: int, *parts: int | str) -> int:
    """Stable derived seed so one edit never perturbs unrelated generations."""
    key = ":".join([str(seed)] + [str(p) for p in parts]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1


def plan_next_phrase(
    planner_lm: ConditionalLM,
    planner_vocab: Vocabulary,
    topic: Sequence[str],
    partial_storyline: Sequence[Phrase],
    diversity: DiversitySettings | None = None,
    seed: int = 0,
) -> Phrase:
    """Sample one storyline phrase distinct from every existing phrase.

    Existing phrases (plus their end marker) are masked during sampling;
    a phrase that still collides (e.g. cut off at the length cap) is
    resampled with a derived seed.
    """
    if len(partial_storyline) >= SENTENCES_PER_STORY:
        raise GenerationError("storyline complete")
    diversity = diversity or DiversitySettings()
    temperature = diversity.plan_temperature
    existing = {tuple(p) for p in partial_storyline}
    banned = set(_STRUCTURAL_BANS) | {(EOS_ID,)}
    for phrase in existing:
        banned.add(tuple(planner_vocab.encode(phrase)) + (EOP_ID,))
    context = GenerationContext(
        topic=tuple(planner_vocab.encode(topic)),
        storyline=tuple(tuple(planner_vocab.encode(p)) for p in partial_storyline),
        stage=STAGE_PLAN,
    )
    for attempt in range(MAX_PHRASE_RESAMPLES):
        params = DecodeParams(
            max_tokens=MAX_PHRASE_TOKENS,
            min_tokens=1,
            banned_phrases=frozenset(banned),
            seed=subseed(seed, "phrase", attempt),
        )
        ids = sample_sequence(planner_lm, context, temperature, EOP_ID, params)
        phrase = tuple(planner_vocab.decode(ids))
        if phrase and phrase not in existing:
            return phrase
    raise GenerationError("could not sample a distinct storyline phrase")


def plan_storyline(
    planner_lm: ConditionalLM,
    planner_vocab: Vocabulary,
    topic: Sequence[str],
    diversity: DiversitySettings | None = None,
    seed: int = 0,
) -> list[Phrase]:
    """Five pairwise-distinct phrases conditioned on the topic."""
    if not topic:
        raise GenerationError("empty topic")
    storyline: list[Phrase] = []
    for i in range(SENTENCES_PER_STORY):
        storyline.append(
            plan_next_phrase(
                planner_lm,
                planner_vocab,
                topic,
                storyline,
                diversity,
                seed=subseed(seed, "plan", i),
            )
        )
    return storyline


def _writer_context(
    vocab: Vocabulary,
    topic: Sequence[str],
    storyline: Sequence[Phrase] | None,
    story_so_far: Sequence[Sentence],
) -> GenerationContext:
    return GenerationContext(
        topic=tuple(vocab.encode(topic)),
        storyline=tuple(tuple(vocab.encode(p)) for p in (storyline or ())),
        story=tuple(tuple(vocab.encode(s)) for s in story_so_far),
    )


def write_next_sentence(
    choice: ModelChoice,
    writer_lm: ConditionalLM,
    writer_vocab: Vocabulary,
    topic: Sequence[str],
    storyline: Sequence[Phrase] | None,
    story_so_far: Sequence[Sentence],
    params: DecodeParams | None = None,
    discriminators: Sequence[DiscriminatorModel] | None = None,
    weights: RerankWeights | None = None,
) -> Sentence:
    """Decode one sentence with the conditioning rules of the chosen system."""
    if len(story_so_far) >= SENTENCES_PER_STORY:
        raise GenerationError("story complete")
    if choice is ModelChoice.TITLE_TO_STORY:
        storyline = None
    elif storyline is None:
        raise GenerationError(f"{choice.value} requires a storyline")
    if choice is ModelChoice.PLAN_AND_REVISE and (discriminators is None or weights is None):
        raise GenerationError("planrevise requires discriminators and weights")
    params = params or DecodeParams()
    params = replace(
        params,
        min_tokens=max(params.min_tokens, 1),
        banned_phrases=params.banned_phrases | _STRUCTURAL_BANS | {(EOP_ID,)},
    )
    context = _writer_context(writer_vocab, topic, storyline, story_so_far)
    rescorer = None
    if choice is ModelChoice.PLAN_AND_REVISE:
        rescorer = BilinearRescorer(
            discriminators, weights, writer_lm.params["emb"], context
        )
    hyp = beam_search(writer_lm, context, params, rescorer=rescorer, stop_token=EOS_ID)
    return tuple(writer_vocab.decode(hyp.tokens))


def write_story(
    choice: ModelChoice,
    writer_lm: ConditionalLM,
    writer_vocab: Vocabulary,
    topic: Sequence[str],
    storyline: Sequence[Phrase] | None = None,
    params: DecodeParams | None = None,
    discriminators: Sequence[DiscriminatorModel] | None = None,
    weights: RerankWeights | None = None,
) -> list[Sentence]:
    """Decode a full five-sentence story, one sentence at a time."""
    story: list[Sentence] = []
    for _ in range(SENTENCES_PER_STORY):
        story.append(
            write_next_sentence(
                choice,
                writer_lm,
                writer_vocab,
                topic,
                storyline,
                story,
                params,
                discriminators,
                weights,
            )
        )
    return story


def build_training_sequences(
    kind: str,
    vocab: Vocabulary,
    stories: Sequence[StoryRecord] | None = None,
    storylines: Sequence[StorylineRecord] | None = None,
) -> list[list[int]]:
    """Flat id sequences for each model kind's training stream."""
    sequences: list[list[int]] = []
    if kind == "planner":
        if storylines is None:
            raise ValueError("planner training needs storyline records")
        for rec in storylines:
            seq = vocab.encode(rec.title) + [SEP_TITLE_ID]
            for phrase in rec.phrases:
                seq.extend(vocab.encode(phrase.tokens))
                seq.append(EOP_ID)
            seq.append(EOT_ID)
            sequences.append(seq)
        return sequences
    if stories is None:
        raise ValueError("writer training needs story records")
    if kind == "planwrite" and storylines is None:
        raise ValueError("planwrite training needs storyline records")
    for idx, rec in enumerate(stories):
        seq = vocab.encode(rec.title) + [SEP_TITLE_ID]
        if kind == "planwrite":
            for phrase in storylines[idx].phrases:
                seq.extend(vocab.encode(phrase.tokens))
                seq.append(EOP_ID)
        elif kind != "title2story":
            raise ValueError(f"unknown model kind {kind!r}")
        seq.append(SEP_PLAN_ID)
        for sentence in rec.sentences:
            seq.extend(vocab.encode(sentence))
            seq.append(EOS_ID)
        seq.append(EOT_ID)
        sequences.append(seq)
    return sequences


@dataclass
class CrossModelResult:
    storyline: list[Phrase]
    stories: dict[str, list[Sentence]]
    labels: list[str] = field(default_factory=lambda: [c.value for c in ModelChoice.order()])


@dataclass
class Engine:
    """All loaded models plus the shared generation entry points."""

    planner_lm: ConditionalLM
    planner_vocab: Vocabulary
    title_lm: ConditionalLM
    planwrite_lm: ConditionalLM
    writer_vocab: Vocabulary
    discriminators: list[DiscriminatorModel]
    weights: RerankWeights
    taxonomy: TaxonomyGraph | None = None
    temperature_bounds: tuple[float, float] = TEMPERATURE_BOUNDS
    oov_max_distance: int = DEFAULT_MAX_DISTANCE
    decode_defaults: DecodeParams = field(default_factory=DecodeParams)

    def resolve_text(self, text: str) -> list[str]:
        """Tokenize free text and swap unknown words for taxonomy neighbors."""
        return resolve_tokens(
            tokenize(text), self.writer_vocab, self.taxonomy, self.oov_max_distance
        )

    def writer_for(self, choice: ModelChoice) -> ConditionalLM:
        return self.title_lm if choice is ModelChoice.TITLE_TO_STORY else self.planwrite_lm

    def plan_next_phrase(
        self,
        topic: Sequence[str],
        partial_storyline: Sequence[Phrase],
        diversity: DiversitySettings | None,
        seed: int,
    ) -> Phrase:
        diversity = diversity or DiversitySettings()
        diversity.validate(self.temperature_bounds)
        return plan_next_phrase(
            self.planner_lm, self.planner_vocab, topic, partial_storyline, diversity, seed
        )

    def plan_storyline(
        self, topic: Sequence[str], diversity: DiversitySettings | None, seed: int
    ) -> list[Phrase]:
        diversity = diversity or DiversitySettings()
        diversity.validate(self.temperature_bounds)
        return plan_storyline(self.planner_lm, self.planner_vocab, topic, diversity, seed)

    def write_next_sentence(
        self,
        choice: ModelChoice,
        topic: Sequence[str],
        storyline: Sequence[Phrase] | None,
        story_so_far: Sequence[Sentence],
        diversity: DiversitySettings | None = None,
        params: DecodeParams | None = None,
    ) -> Sentence:
        diversity = diversity or DiversitySettings()
        diversity.validate(self.temperature_bounds)
        params = params or self.decode_defaults
        params = replace(params, temperature=diversity.story_temperature)
        return write_next_sentence(
            choice,
            self.writer_for(choice),
            self.writer_vocab,
            topic,
            storyline,
            story_so_far,
            params,
            self.discriminators if choice is ModelChoice.PLAN_AND_REVISE else None,
            self.weights if choice is ModelChoice.PLAN_AND_REVISE else None,
        )

    def write_story(
        self,
        choice: ModelChoice,
        topic: Sequence[str],
        storyline: Sequence[Phrase] | None,
        diversity: DiversitySettings | None = None,
        params: DecodeParams | None = None,
    ) -> list[Sentence]:
        story: list[Sentence] = []
        for _ in range(SENTENCES_PER_STORY):
            story.append(
                self.write_next_sentence(choice, topic, storyline, story, diversity, params)
            )
        return story

    def cross_model_generate(
        self,
        topic: Sequence[str],
        diversity: DiversitySettings | None = None,
        seed: int = 0,
    ) -> CrossModelResult:
        """One shared storyline, then one story from each writer system."""
        diversity = diversity or DiversitySettings()
        diversity.validate(self.temperature_bounds)
        storyline = self.plan_storyline(topic, diversity, seed=subseed(seed, "cross-plan"))
        stories = {}
        for choice in ModelChoice.order():
            stories[choice.value] = self.write_story(
                choice,
                topic,
                storyline if choice is not ModelChoice.TITLE_TO_STORY else None,
                diversity,
            )
        return CrossModelResult(storyline=storyline, stories=stories)
