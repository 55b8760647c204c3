"""Session state machine tests: gating, replay, provenance, turn-taking."""

import numpy as np
import pytest

from storyloom import session as S
from storyloom.pipeline import ModelChoice
from storyloom.session import (
    ADMISSIBLE_EVENTS,
    EVENT_KINDS,
    Event,
    InadmissibleEvent,
    SESSION_MODES,
    apply_event,
    admissible,
    canonical_json,
    create_session,
    export_story,
    log_header,
    read_log,
    replay,
    replay_file,
    state_json,
    write_log,
)


def apply_all(session, events, engine):
    for event in events:
        session = apply_event(session, event, engine)
    return session


def seeded_session(mode, engine, seed=11, events=()):
    session = create_session(mode, seed=seed)
    return apply_all(session, events, engine)


TOPIC = Event(kind=S.SET_TOPIC, text="the old harbor")


class TestCreate:
    def test_unique_ids(self):
        ids = {create_session(S.ALL, seed=1).id for _ in range(20)}
        assert len(ids) == 20

    def test_same_seed_same_initial_state(self):
        a = create_session(S.ALL, seed=5, session_id="fixed")
        b = create_session(S.ALL, seed=5, session_id="fixed")
        assert state_json(a) == state_json(b)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            create_session("bogus", seed=0)

    def test_default_model(self):
        assert create_session(S.ALL, seed=0).model_choice == "planrevise"


class TestModeGatingTable:
    def test_table_is_total(self):
        for mode in SESSION_MODES:
            for kind in EVENT_KINDS:
                assert isinstance(admissible(mode, kind), bool)

    def test_inadmissible_kinds_rejected_with_mode_rule(self, toy_engine):
        for mode in SESSION_MODES:
            session = seeded_session(mode, toy_engine)
            for kind in EVENT_KINDS:
                if admissible(mode, kind):
                    continue
                event = Event(kind=kind, index=0, text="hello", choice="planwrite")
                with pytest.raises(InadmissibleEvent) as err:
                    apply_event(session, event, toy_engine)
                assert err.value.rule == f"mode-{mode}-forbids-{kind}"

    def test_admissible_kinds_do_not_hit_mode_rule(self, toy_engine):
        # any failure for an admissible kind must name a state rule instead
        for mode in SESSION_MODES:
            session = seeded_session(mode, toy_engine, events=[TOPIC])
            for kind in EVENT_KINDS:
                if not admissible(mode, kind):
                    continue
                event = Event(kind=kind, index=0, text="a bright lantern",
                              choice="planwrite", plan_temperature=0.7)
                try:
                    apply_event(session, event, toy_engine)
                except InadmissibleEvent as exc:
                    assert not exc.rule.startswith("mode-"), (mode, kind, exc.rule)

    def test_spec_examples(self, toy_engine):
        story_only = seeded_session(S.STORY_ONLY, toy_engine)
        with pytest.raises(InadmissibleEvent):
            apply_event(story_only, Event(kind=S.EDIT_PHRASE, index=0, text="x"), toy_engine)
        machine_only = seeded_session(S.MACHINE_ONLY, toy_engine)
        for kind in (S.EDIT_PHRASE, S.EDIT_SENTENCE, S.DELETE_PHRASE, S.SELECT_MODEL):
            assert not admissible(S.MACHINE_ONLY, kind), kind
        for kind in (S.SET_TOPIC, S.SET_DIVERSITY, S.GENERATE_PHRASE,
                     S.GENERATE_ALL_PHRASES, S.GENERATE_SENTENCE, S.GENERATE_ALL_SENTENCES):
            assert admissible(S.MACHINE_ONLY, kind), kind
        assert admissible(S.DIVERSITY_ONLY, S.SELECT_MODEL)
        assert not admissible(S.TURN_TAKING, S.GENERATE_PHRASE)


class TestBasicFlow:
    def test_machine_only_full_story(self, toy_engine):
        session = seeded_session(
            S.MACHINE_ONLY,
            toy_engine,
            events=[TOPIC, Event(kind=S.GENERATE_ALL_PHRASES),
                    Event(kind=S.GENERATE_ALL_SENTENCES)],
        )
        assert len(session.storyline_items) == 5
        assert len(session.story_items) == 5
        assert all(i.provenance.kind == S.PROV_MACHINE for i in session.storyline_items)
        assert all(i.provenance.kind == S.PROV_MACHINE for i in session.story_items)

    def test_generation_requires_topic(self, toy_engine):
        session = seeded_session(S.MACHINE_ONLY, toy_engine)
        with pytest.raises(InadmissibleEvent) as err:
            apply_event(session, Event(kind=S.GENERATE_PHRASE), toy_engine)
        assert err.value.rule == "topic-required"

    def test_story_requires_storyline_for_plan_models(self, toy_engine):
        session = seeded_session(S.MACHINE_ONLY, toy_engine, events=[TOPIC])
        with pytest.raises(InadmissibleEvent) as err:
            apply_event(session, Event(kind=S.GENERATE_SENTENCE), toy_engine)
        assert err.value.rule == "storyline-required"

    def test_diversity_bounds_rejected(self, toy_engine):
        session = seeded_session(S.ALL, toy_engine)
        with pytest.raises(InadmissibleEvent) as err:
            apply_event(session, Event(kind=S.SET_DIVERSITY, plan_temperature=9.0), toy_engine)
        assert err.value.rule == "diversity-bounds"

    def test_empty_topic_rejected(self, toy_engine):
        session = seeded_session(S.ALL, toy_engine)
        with pytest.raises(InadmissibleEvent) as err:
            apply_event(session, Event(kind=S.SET_TOPIC, text="   "), toy_engine)
        assert err.value.rule == "empty-text"

    def test_done_freezes_session(self, toy_engine):
        session = seeded_session(S.ALL, toy_engine, events=[TOPIC, Event(kind=S.DONE)])
        with pytest.raises(InadmissibleEvent) as err:
            apply_event(session, TOPIC, toy_engine)
        assert err.value.rule == "session-done"

    def test_index_out_of_range(self, toy_engine):
        session = seeded_session(S.ALL, toy_engine, events=[TOPIC])
        with pytest.raises(InadmissibleEvent) as err:
            apply_event(session, Event(kind=S.DELETE_PHRASE, index=3), toy_engine)
        assert err.value.rule == "index-out-of-range"


class TestProvenance:
    def test_human_append_and_edit(self, toy_engine):
        session = seeded_session(
            S.ALL,
            toy_engine,
            events=[TOPIC, Event(kind=S.EDIT_PHRASE, index=0, text="a silver wave")],
        )
        item = session.storyline_items[0]
        assert item.provenance.kind == S.PROV_HUMAN
        assert item.provenance.original is None

    def test_editing_machine_item_keeps_original(self, toy_engine):
        session = seeded_session(
            S.ALL, toy_engine, events=[TOPIC, Event(kind=S.GENERATE_PHRASE)]
        )
        machine_text = S.detokenize(session.storyline_items[0].tokens)
        session = apply_event(
            session, Event(kind=S.EDIT_PHRASE, index=0, text="my own words"), toy_engine
        )
        item = session.storyline_items[0]
        assert item.provenance.kind == S.PROV_HUMAN_EDITED
        assert item.provenance.original == machine_text
        # a second edit keeps the first machine original
        session = apply_event(
            session, Event(kind=S.EDIT_PHRASE, index=0, text="different again"), toy_engine
        )
        assert session.storyline_items[0].provenance.original == machine_text

    def test_human_item_never_silently_machine(self, toy_engine):
        events = [TOPIC, Event(kind=S.EDIT_PHRASE, index=0, text="a quiet tide"),
                  Event(kind=S.GENERATE_PHRASE)]
        session = seeded_session(S.ALL, toy_engine, events=events)
        assert session.storyline_items[0].provenance.kind == S.PROV_HUMAN
        assert session.storyline_items[1].provenance.kind == S.PROV_MACHINE

    def test_regeneration_replaces_only_target(self, toy_engine):
        session = seeded_session(
            S.ALL,
            toy_engine,
            events=[TOPIC, Event(kind=S.GENERATE_ALL_PHRASES),
                    Event(kind=S.GENERATE_ALL_SENTENCES)],
        )
        before = [i.tokens for i in session.story_items]
        updated = apply_event(
            session, Event(kind=S.REGENERATE_SENTENCE, index=2), toy_engine
        )
        after = [i.tokens for i in updated.story_items]
        assert after[:2] == before[:2]
        assert after[3:] == before[3:]
        assert updated.story_items[2].provenance.kind == S.PROV_MACHINE

    def test_edit_does_not_cascade_delete(self, toy_engine):
        session = seeded_session(
            S.ALL,
            toy_engine,
            events=[TOPIC, Event(kind=S.GENERATE_ALL_PHRASES),
                    Event(kind=S.GENERATE_ALL_SENTENCES)],
        )
        updated = apply_event(
            session, Event(kind=S.EDIT_PHRASE, index=1, text="new plan words"), toy_engine
        )
        assert len(updated.story_items) == 5
        assert [i.tokens for i in updated.story_items] == [i.tokens for i in session.story_items]


class TestTurnTaking:
    def start(self, toy_engine):
        return seeded_session(S.TURN_TAKING, toy_engine, events=[TOPIC])

    def test_human_starts(self, toy_engine):
        session = self.start(toy_engine)
        assert session.turn_owner == S.OWNER_HUMAN
        with pytest.raises(InadmissibleEvent) as err:
            apply_event(session, Event(kind=S.GENERATE_SENTENCE), toy_engine)
        assert err.value.rule == "not-your-turn"

    def full_round(self, toy_engine):
        session = self.start(toy_engine)
        session = apply_event(
            session, Event(kind=S.EDIT_SENTENCE, index=0, text="i walked to the shore ."),
            toy_engine,
        )
        session = apply_event(session, Event(kind=S.COMMIT_TURN), toy_engine)
        session = apply_event(session, Event(kind=S.GENERATE_SENTENCE), toy_engine)
        return session

    def test_alternating_provenance(self, toy_engine):
        session = self.full_round(toy_engine)
        session = apply_event(
            session, Event(kind=S.EDIT_SENTENCE, index=2, text="then i sat down ."),
            toy_engine,
        )
        session = apply_event(session, Event(kind=S.COMMIT_TURN), toy_engine)
        session = apply_event(session, Event(kind=S.GENERATE_SENTENCE), toy_engine)
        kinds = [i.provenance.kind for i in session.story_items]
        assert kinds[0] == S.PROV_HUMAN
        assert kinds[1] in (S.PROV_MACHINE, S.PROV_HUMAN_EDITED)
        assert kinds[2] == S.PROV_HUMAN
        assert kinds[3] in (S.PROV_MACHINE, S.PROV_HUMAN_EDITED)

    def test_committed_sentences_read_only(self, toy_engine):
        session = self.full_round(toy_engine)
        # commit included sentence 0; editing it now is rejected
        with pytest.raises(InadmissibleEvent) as err:
            apply_event(
                session, Event(kind=S.EDIT_SENTENCE, index=0, text="rewrite"), toy_engine
            )
        assert err.value.rule == "read-only"

    def test_can_edit_machine_sentence_before_moving_on(self, toy_engine):
        session = self.full_round(toy_engine)
        session = apply_event(
            session, Event(kind=S.EDIT_SENTENCE, index=1, text="my fix ."), toy_engine
        )
        assert session.story_items[1].provenance.kind == S.PROV_HUMAN_EDITED

    def test_double_append_without_commit_rejected(self, toy_engine):
        session = self.start(toy_engine)
        session = apply_event(
            session, Event(kind=S.EDIT_SENTENCE, index=0, text="first ."), toy_engine
        )
        with pytest.raises(InadmissibleEvent) as err:
            apply_event(
                session, Event(kind=S.EDIT_SENTENCE, index=1, text="second ."), toy_engine
            )
        assert err.value.rule == "alternation"

    def test_commit_without_writing_rejected(self, toy_engine):
        session = self.start(toy_engine)
        with pytest.raises(InadmissibleEvent) as err:
            apply_event(session, Event(kind=S.COMMIT_TURN), toy_engine)
        assert err.value.rule == "empty-turn"

    def test_no_storyline_in_turn_taking(self, toy_engine):
        session = self.full_round(toy_engine)
        assert session.storyline_items == ()


class TestDiversityOnly:
    def test_cross_stories_and_selection(self, toy_engine):
        session = seeded_session(
            S.DIVERSITY_ONLY,
            toy_engine,
            events=[TOPIC, Event(kind=S.GENERATE_ALL_SENTENCES)],
        )
        assert session.cross_stories is not None
        labels = [label for label, _ in session.cross_stories]
        assert labels == ["title2story", "planwrite", "planrevise"]
        current = [i.tokens for i in session.story_items]
        assert current == [tuple(s) for s in dict(session.cross_stories)["planrevise"]]
        session = apply_event(
            session, Event(kind=S.SELECT_MODEL, choice="title2story"), toy_engine
        )
        assert [i.tokens for i in session.story_items] == [
            tuple(s) for s in dict(session.cross_stories)["title2story"]
        ]


class TestExport:
    def test_single_sentence(self, toy_engine):
        session = seeded_session(
            S.STORY_ONLY,
            toy_engine,
            events=[TOPIC, Event(kind=S.EDIT_SENTENCE, index=0, text="i was scared .")],
        )
        assert export_story(session) == "I was scared."

    def test_empty_story_rejected(self, toy_engine):
        session = seeded_session(S.ALL, toy_engine)
        with pytest.raises(ValueError, match="empty story"):
            export_story(session)

    def test_export_is_pure(self, toy_engine):
        session = seeded_session(
            S.STORY_ONLY,
            toy_engine,
            events=[TOPIC, Event(kind=S.EDIT_SENTENCE, index=0, text="it rained .")],
        )
        before = state_json(session)
        export_story(session)
        assert state_json(session) == before


def admissible_event_pool(session, rng):
    """Concrete events expected to succeed in the current state."""
    pool = []
    mode = session.mode
    topics = ["the old harbor", "a bright morning", "the lost map"]
    texts = ["a silver wave", "the hidden door", "morning fog", "i kept walking ."]

    def ok(kind):
        return admissible(mode, kind)

    if ok(S.SET_TOPIC):
        pool.append(Event(kind=S.SET_TOPIC, text=topics[int(rng.integers(0, len(topics)))]))
    if ok(S.SET_DIVERSITY):
        pool.append(Event(kind=S.SET_DIVERSITY,
                          plan_temperature=float(rng.choice([0.3, 0.5, 1.0]))))
    if ok(S.SELECT_MODEL):
        pool.append(Event(kind=S.SELECT_MODEL,
                          choice=str(rng.choice(["title2story", "planwrite", "planrevise"]))))
    has_topic = bool(session.topic)
    n_phrases = len(session.storyline_items)
    n_sentences = len(session.story_items)
    if has_topic and n_phrases < 5:
        if ok(S.GENERATE_PHRASE):
            pool.append(Event(kind=S.GENERATE_PHRASE))
        if ok(S.GENERATE_ALL_PHRASES):
            pool.append(Event(kind=S.GENERATE_ALL_PHRASES))
    if ok(S.EDIT_PHRASE) and n_phrases < 5:
        pool.append(Event(kind=S.EDIT_PHRASE, index=n_phrases,
                          text=texts[int(rng.integers(0, 3))]))
    if ok(S.EDIT_PHRASE) and n_phrases:
        pool.append(Event(kind=S.EDIT_PHRASE, index=int(rng.integers(0, n_phrases)),
                          text=texts[int(rng.integers(0, 3))]))
    if ok(S.DELETE_PHRASE) and n_phrases:
        pool.append(Event(kind=S.DELETE_PHRASE, index=int(rng.integers(0, n_phrases))))
    if ok(S.REGENERATE_PHRASE) and n_phrases and has_topic:
        pool.append(Event(kind=S.REGENERATE_PHRASE, index=int(rng.integers(0, n_phrases))))
    storyline_ready = n_phrases > 0 or mode == S.TURN_TAKING
    if mode == S.TURN_TAKING:
        if session.turn_owner == S.OWNER_HUMAN:
            if n_sentences < 5 and (
                not session.story_items
                or session.story_items[-1].provenance.kind != S.PROV_HUMAN
            ):
                pool.append(Event(kind=S.EDIT_SENTENCE, index=n_sentences,
                                  text="i kept walking ."))
            if session.story_items and session.story_items[-1].provenance.kind == S.PROV_HUMAN:
                pool.append(Event(kind=S.COMMIT_TURN))
            uncommitted = [k for k in range(session.committed_count, n_sentences)]
            if uncommitted:
                pool.append(Event(kind=S.EDIT_SENTENCE,
                                  index=int(rng.choice(uncommitted)),
                                  text="a small fix ."))
        elif has_topic and n_sentences < 5:
            pool.append(Event(kind=S.GENERATE_SENTENCE))
        return pool
    if has_topic and storyline_ready and n_sentences < 5 and ok(S.GENERATE_SENTENCE):
        pool.append(Event(kind=S.GENERATE_SENTENCE))
    if has_topic and n_sentences < 5 and ok(S.GENERATE_ALL_SENTENCES):
        if mode == S.DIVERSITY_ONLY or storyline_ready:
            pool.append(Event(kind=S.GENERATE_ALL_SENTENCES))
    if ok(S.EDIT_SENTENCE) and n_sentences < 5:
        pool.append(Event(kind=S.EDIT_SENTENCE, index=n_sentences, text="it rained ."))
    if ok(S.EDIT_SENTENCE) and n_sentences:
        pool.append(Event(kind=S.EDIT_SENTENCE, index=int(rng.integers(0, n_sentences)),
                          text="the wind rose ."))
    if ok(S.DELETE_SENTENCE) and n_sentences:
        pool.append(Event(kind=S.DELETE_SENTENCE, index=int(rng.integers(0, n_sentences))))
    if ok(S.REGENERATE_SENTENCE) and n_sentences and has_topic and storyline_ready:
        pool.append(Event(kind=S.REGENERATE_SENTENCE, index=int(rng.integers(0, n_sentences))))
    return pool


class TestReplay:
    def test_fifty_random_sequences_replay_bit_identical(self, toy_engine):
        rng = np.random.default_rng(31)
        modes = list(SESSION_MODES)
        for trial in range(50):
            mode = modes[trial % len(modes)]
            session = create_session(mode, seed=trial)
            initial = session
            events = []
            for _ in range(int(rng.integers(3, 8))):
                pool = admissible_event_pool(session, rng)
                if not pool:
                    break
                event = pool[int(rng.integers(0, len(pool)))]
                session = apply_event(session, event, toy_engine)
                events.append(event)
            replayed = replay(log_header(initial), events, toy_engine)
            assert state_json(replayed) == state_json(session), (trial, mode)

    def test_empty_log_fresh_session(self, toy_engine):
        session = create_session(S.ALL, seed=3, session_id="abc")
        replayed = replay(log_header(session), [], toy_engine)
        assert state_json(replayed) == state_json(session)

    def test_log_file_round_trip(self, toy_engine, tmp_path):
        session = create_session(S.ALL, seed=9)
        events = [TOPIC, Event(kind=S.EDIT_PHRASE, index=0, text="the lighthouse lens")]
        final = apply_all(session, events, toy_engine)
        path = tmp_path / f"{session.id}.jsonl"
        write_log(path, session, events)
        restored = replay_file(path, toy_engine)
        assert state_json(restored) == state_json(final)

    def test_inadmissible_event_in_log_names_entry(self, toy_engine):
        session = create_session(S.MACHINE_ONLY, seed=1)
        events = [TOPIC, Event(kind=S.EDIT_PHRASE, index=0, text="x")]
        with pytest.raises(S.ReplayError, match="entry 2"):
            replay(log_header(session), events, toy_engine)

    def test_corrupt_log_line(self, toy_engine, tmp_path):
        session = create_session(S.ALL, seed=2)
        path = tmp_path / "log.jsonl"
        write_log(path, session, [TOPIC])
        with open(path, "a", encoding="utf-8") as fh:
            fh.write("{not json\n")
        with pytest.raises(S.ReplayError, match="entry 2"):
            read_log(path)

    def test_canonical_json_is_sorted_and_compact(self):
        payload = {"b": 1, "a": [1, 2]}
        assert canonical_json(payload) == '{"a":[1,2],"b":1}'
