"""Planner and writer orchestration tests over small random models."""

import numpy as np
import pytest

from storyloom.decoding import DecodeParams
from storyloom.lm import LMConfig, init_lm
from storyloom.pipeline import (
    DEFAULT_PLAN_TEMPERATURE,
    DiversitySettings,
    GenerationError,
    ModelChoice,
    build_training_sequences,
    plan_next_phrase,
    plan_storyline,
    subseed,
    write_next_sentence,
    write_story,
)
from storyloom.text import EOP_ID, EOS_ID, EOT_ID, SEP_PLAN_ID, SEP_TITLE_ID

from conftest import make_toy_engine


class TestDiversitySettings:
    def test_defaults(self):
        settings = DiversitySettings()
        assert settings.plan_temperature == 0.5
        assert settings.story_temperature is None
        assert DEFAULT_PLAN_TEMPERATURE == 0.5

    def test_bounds(self):
        DiversitySettings(plan_temperature=0.1).validate()
        DiversitySettings(plan_temperature=2.0).validate()
        with pytest.raises(ValueError):
            DiversitySettings(plan_temperature=0.05).validate()
        with pytest.raises(ValueError):
            DiversitySettings(story_temperature=2.5).validate()

    def test_bounds_overridable(self):
        DiversitySettings(plan_temperature=3.0).validate(bounds=(0.1, 5.0))


class TestPlanner:
    def test_storyline_has_five_distinct_phrases(self, toy_engine):
        topic = ["the", "old", "harbor"]
        storyline = toy_engine.plan_storyline(topic, None, seed=4)
        assert len(storyline) == 5
        assert len({tuple(p) for p in storyline}) == 5

    def test_reproducible(self, toy_engine):
        topic = ["a", "quiet", "library"]
        a = toy_engine.plan_storyline(topic, None, seed=9)
        b = toy_engine.plan_storyline(topic, None, seed=9)
        assert a == b

    def test_next_phrase_distinct_from_existing(self, toy_engine):
        topic = ["the", "storm"]
        partial = toy_engine.plan_storyline(topic, None, seed=2)[:4]
        phrase = toy_engine.plan_next_phrase(topic, partial, None, seed=77)
        assert tuple(phrase) not in {tuple(p) for p in partial}

    def test_full_storyline_rejects_more(self, toy_engine):
        topic = ["the", "storm"]
        storyline = toy_engine.plan_storyline(topic, None, seed=2)
        with pytest.raises(GenerationError, match="complete"):
            toy_engine.plan_next_phrase(topic, storyline, None, seed=1)

    def test_empty_topic_rejected(self, toy_engine):
        with pytest.raises(GenerationError, match="empty topic"):
            plan_storyline(
                toy_engine.planner_lm, toy_engine.planner_vocab, [], None, seed=0
            )

    def test_no_duplicates_over_many_seeds(self, toy_engine):
        topic = ["the", "gentle", "ranger"]
        for seed in range(100):
            storyline = toy_engine.plan_storyline(topic, None, seed=seed)
            assert len({tuple(p) for p in storyline}) == 5, seed

    def test_phrase_token_budget(self, toy_engine):
        for seed in range(10):
            storyline = toy_engine.plan_storyline(["the", "coast"], None, seed=seed)
            assert all(1 <= len(p) <= 4 for p in storyline)


class TestWriters:
    def test_exactly_five_sentences(self, toy_engine):
        topic = ["the", "dusty", "trail"]
        storyline = toy_engine.plan_storyline(topic, None, seed=3)
        story = toy_engine.write_story(ModelChoice.PLAN_AND_WRITE, topic, storyline)
        assert len(story) == 5
        assert all(len(s) >= 1 for s in story)

    def test_title_to_story_ignores_storyline(self, toy_engine):
        topic = ["the", "pale", "moon"]
        storyline = toy_engine.plan_storyline(topic, None, seed=5)
        with_plan = toy_engine.write_story(ModelChoice.TITLE_TO_STORY, topic, storyline)
        without = toy_engine.write_story(ModelChoice.TITLE_TO_STORY, topic, None)
        assert with_plan == without

    def test_plan_models_require_storyline(self, toy_engine):
        topic = ["the", "night"]
        for choice in (ModelChoice.PLAN_AND_WRITE, ModelChoice.PLAN_AND_REVISE):
            with pytest.raises(GenerationError, match="storyline"):
                toy_engine.write_story(choice, topic, None)

    def test_revise_requires_discriminators(self, toy_engine):
        topic = ["the", "night"]
        storyline = toy_engine.plan_storyline(topic, None, seed=1)
        with pytest.raises(GenerationError, match="discriminators"):
            write_story(
                ModelChoice.PLAN_AND_REVISE,
                toy_engine.planwrite_lm,
                toy_engine.writer_vocab,
                topic,
                storyline,
            )

    def test_sentencewise_equals_full_story(self, toy_engine):
        topic = ["the", "broken", "bell"]
        storyline = toy_engine.plan_storyline(topic, None, seed=8)
        full = toy_engine.write_story(ModelChoice.PLAN_AND_REVISE, topic, storyline)
        stepwise = []
        for _ in range(5):
            stepwise.append(
                toy_engine.write_next_sentence(
                    ModelChoice.PLAN_AND_REVISE, topic, storyline, stepwise
                )
            )
        assert [tuple(s) for s in stepwise] == [tuple(s) for s in full]

    def test_complete_story_rejects_sixth(self, toy_engine):
        topic = ["the", "bell"]
        storyline = toy_engine.plan_storyline(topic, None, seed=8)
        story = toy_engine.write_story(ModelChoice.PLAN_AND_WRITE, topic, storyline)
        with pytest.raises(GenerationError, match="story complete"):
            toy_engine.write_next_sentence(
                ModelChoice.PLAN_AND_WRITE, topic, storyline, story
            )

    def test_revise_with_zero_lambda_matches_plan_and_write(self):
        for seed in range(20):
            engine = make_toy_engine(seed=seed, weights=(0.0, 0.0))
            topic = ["the", "long", "road"]
            storyline = engine.plan_storyline(topic, None, seed=seed)
            plain = engine.write_story(ModelChoice.PLAN_AND_WRITE, topic, storyline)
            revised = engine.write_story(ModelChoice.PLAN_AND_REVISE, topic, storyline)
            assert [tuple(s) for s in plain] == [tuple(s) for s in revised], seed

    def test_upstream_edit_changes_downstream_generation(self, trained_toy_engine):
        # on a trained model the conditional argmax for sentence 2 depends on
        # sentence 1's content: some edit must change the continuation
        from storyloom.text import tokenize

        engine = trained_toy_engine
        topic = tokenize("the bright gardener")
        storyline = [("gardener",), ("pond",), ("trowel",), ("hedge",), ("tulip",)]
        first_sentences = [
            "the gardener loved the bright rose .",
            "the clown loved the bright tent .",
            "the sailor loved the bright wave .",
            "the miner loved the bright gem .",
            "the astronaut loved the bright comet .",
        ]
        continuations = {
            tuple(
                engine.write_next_sentence(
                    ModelChoice.PLAN_AND_WRITE, topic, storyline, [tuple(tokenize(s))]
                )
            )
            for s in first_sentences
        }
        assert len(continuations) > 1

    def test_oov_topic_never_reaches_model(self, toy_engine):
        story = toy_engine.write_story(
            ModelChoice.TITLE_TO_STORY, ["zzzunknownzzz", "harbor"], None
        )
        assert len(story) == 5  # encode mapped the unknown word to UNK


class TestCrossModel:
    def test_three_labeled_stories(self, toy_engine):
        result = toy_engine.cross_model_generate(["the", "fog"], seed=2)
        assert result.labels == ["title2story", "planwrite", "planrevise"]
        assert set(result.stories) == set(result.labels)
        assert len(result.storyline) == 5
        for story in result.stories.values():
            assert len(story) == 5

    def test_reproducible(self, toy_engine):
        a = toy_engine.cross_model_generate(["the", "fog"], seed=2)
        b = toy_engine.cross_model_generate(["the", "fog"], seed=2)
        assert a.storyline == b.storyline
        assert a.stories == b.stories

    def test_title_story_independent_of_storyline(self, toy_engine):
        result = toy_engine.cross_model_generate(["the", "fog"], seed=2)
        direct = toy_engine.write_story(ModelChoice.TITLE_TO_STORY, ["the", "fog"], None)
        assert result.stories["title2story"] == direct


class TestTrainingSequences:
    def make_story_vocab(self):
        from storyloom.synth import generate_corpus
        from storyloom.text import build_vocab
        from storyloom.rake import default_stopwords, extract_storyline

        records = generate_corpus(4, seed=2)
        vocab = build_vocab(records)
        stops = default_stopwords()
        storylines = [extract_storyline(r, stops) for r in records]
        return records, storylines, vocab

    def test_planner_layout(self):
        records, storylines, vocab = self.make_story_vocab()
        seqs = build_training_sequences("planner", vocab, storylines=storylines)
        seq = seqs[0]
        assert seq.count(SEP_TITLE_ID) == 1
        assert seq.count(EOP_ID) == 5
        assert SEP_PLAN_ID not in seq
        assert seq[-1] == EOT_ID

    def test_title2story_layout(self):
        records, storylines, vocab = self.make_story_vocab()
        seqs = build_training_sequences("title2story", vocab, stories=records)
        seq = seqs[0]
        assert seq.count(SEP_PLAN_ID) == 1
        assert seq.count(EOS_ID) == 5
        assert EOP_ID not in seq

    def test_planwrite_layout(self):
        records, storylines, vocab = self.make_story_vocab()
        seqs = build_training_sequences(
            "planwrite", vocab, stories=records, storylines=storylines
        )
        seq = seqs[0]
        assert seq.count(EOP_ID) == 5
        assert seq.count(EOS_ID) == 5
        assert seq.index(SEP_TITLE_ID) < seq.index(SEP_PLAN_ID)

    def test_unknown_kind(self):
        records, storylines, vocab = self.make_story_vocab()
        with pytest.raises(ValueError):
            build_training_sequences("bogus", vocab, stories=records)


class TestSubseed:
    def test_stable_and_distinct(self):
        assert subseed(1, "a", 2) == subseed(1, "a", 2)
        assert subseed(1, "a", 2) != subseed(1, "a", 3)
        assert subseed(1, "a") != subseed(2, "a")

    def test_non_negative(self):
        for k in range(50):
            assert subseed(k, "x") >= 0
