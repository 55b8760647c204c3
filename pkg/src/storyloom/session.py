"""Event-sourced collaborative writing sessions.

A session's state is a pure function of (seed, event log): every mutation
is an event, generation events draw sub-seeds derived from the session
seed and the event's position, and replaying a log reproduces the state
bit-for-bit. Six interaction modes gate which event kinds are admissible;
the turn-taking mode additionally locks previously committed sentences.

Storyline and story items carry provenance (machine, human, or
human-edited with the machine original retained) so the interface can
render who wrote what.
"""

from __future__ import annotations

import dataclasses
import json
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .decoding import DecodeParams
from .pipeline import (
    DiversitySettings,
    Engine,
    GenerationError,
    ModelChoice,
    subseed,
)
from .text import SENTENCES_PER_STORY, detokenize

SCHEMA_VERSION = 1

# Event kinds
SET_TOPIC = "set_topic"
SET_DIVERSITY = "set_diversity"
SELECT_MODEL = "select_model"
GENERATE_PHRASE = "generate_phrase"
GENERATE_ALL_PHRASES = "generate_all_phrases"
EDIT_PHRASE = "edit_phrase"
DELETE_PHRASE = "delete_phrase"
GENERATE_SENTENCE = "generate_sentence"
GENERATE_ALL_SENTENCES = "generate_all_sentences"
EDIT_SENTENCE = "edit_sentence"
DELETE_SENTENCE = "delete_sentence"
REGENERATE_SENTENCE = "regenerate_sentence"
REGENERATE_PHRASE = "regenerate_phrase"
COMMIT_TURN = "commit_turn"
DONE = "done"

EVENT_KINDS = (
    SET_TOPIC,
    SET_DIVERSITY,
    SELECT_MODEL,
    GENERATE_PHRASE,
    GENERATE_ALL_PHRASES,
    EDIT_PHRASE,
    DELETE_PHRASE,
    GENERATE_SENTENCE,
    GENERATE_ALL_SENTENCES,
    EDIT_SENTENCE,
    DELETE_SENTENCE,
    REGENERATE_SENTENCE,
    REGENERATE_PHRASE,
    COMMIT_TURN,
    DONE,
)

# Session modes
MACHINE_ONLY = "machine_only"
DIVERSITY_ONLY = "diversity_only"
STORYLINE_ONLY = "storyline_only"
STORY_ONLY = "story_only"
ALL = "all"
TURN_TAKING = "turn_taking"

SESSION_MODES = (MACHINE_ONLY, DIVERSITY_ONLY, STORYLINE_ONLY, STORY_ONLY, ALL, TURN_TAKING)

_BASE_EVENTS = frozenset(
    {
        SET_TOPIC,
        SET_DIVERSITY,
        GENERATE_PHRASE,
        GENERATE_ALL_PHRASES,
        GENERATE_SENTENCE,
        GENERATE_ALL_SENTENCES,
        DONE,
    }
)

# The exhaustive mode-gating table: which event kinds each mode admits.
ADMISSIBLE_EVENTS: dict[str, frozenset[str]] = {
    MACHINE_ONLY: _BASE_EVENTS,
    DIVERSITY_ONLY: _BASE_EVENTS | {SELECT_MODEL},
    STORYLINE_ONLY: _BASE_EVENTS
    | {EDIT_PHRASE, DELETE_PHRASE, REGENERATE_PHRASE, REGENERATE_SENTENCE},
    STORY_ONLY: _BASE_EVENTS | {EDIT_SENTENCE, DELETE_SENTENCE, REGENERATE_SENTENCE},
    ALL: frozenset(EVENT_KINDS) - {COMMIT_TURN},
    TURN_TAKING: frozenset(
        {SET_TOPIC, SET_DIVERSITY, GENERATE_SENTENCE, EDIT_SENTENCE, COMMIT_TURN, DONE}
    ),
}

PROV_MACHINE = "machine"
PROV_HUMAN = "human"
PROV_HUMAN_EDITED = "human_edited"

OWNER_HUMAN = "human"
OWNER_MACHINE = "machine"


class InadmissibleEvent(Exception):
    """An event the session's mode or state rejects; carries the rule name."""

    def __init__(self, rule: str, detail: str = ""):
        self.rule = rule
        super().__init__(f"{rule}: {detail}" if detail else rule)


class ReplayError(ValueError):
    pass


@dataclass(frozen=True)
class Provenance:
    kind: str
    original: str | None = None  # machine text retained through human edits

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.original is not None:
            d["original"] = self.original
        return d


@dataclass(frozen=True)
class Item:
    """One storyline phrase or story sentence plus who authored it."""

    tokens: tuple[str, ...]
    provenance: Provenance

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "display": detokenize(self.tokens),
            "provenance": self.provenance.to_dict(),
        }


@dataclass(frozen=True)
class Event:
    kind: str
    index: int | None = None
    text: str | None = None
    choice: str | None = None
    plan_temperature: float | None = None
    story_temperature: float | None = None

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        for key in ("index", "text", "choice", "plan_temperature", "story_temperature"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        if d.get("kind") not in EVENT_KINDS:
            raise ReplayError(f"unknown event kind {d.get('kind')!r}")
        allowed = {"kind", "index", "text", "choice", "plan_temperature", "story_temperature"}
        extra = set(d) - allowed
        if extra:
            raise ReplayError(f"unknown event fields {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class Session:
    id: str
    mode: str
    rng_seed: int
    model_choice: str = ModelChoice.PLAN_AND_REVISE.value
    topic: tuple[str, ...] = ()
    diversity: DiversitySettings = field(default_factory=DiversitySettings)
    storyline_items: tuple[Item, ...] = ()
    story_items: tuple[Item, ...] = ()
    cross_stories: tuple[tuple[str, tuple[tuple[str, ...], ...]], ...] | None = None
    event_count: int = 0
    turn_owner: str = OWNER_HUMAN
    committed_count: int = 0
    done: bool = False

    def to_state_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "id": self.id,
            "mode": self.mode,
            "model": self.model_choice,
            "seed": self.rng_seed,
            "topic": list(self.topic),
            "topic_display": detokenize(self.topic) if self.topic else "",
            "diversity": {
                "plan_temperature": self.diversity.plan_temperature,
                "story_temperature": self.diversity.story_temperature,
            },
            "storyline": [item.to_dict() for item in self.storyline_items],
            "story": [item.to_dict() for item in self.story_items],
            "cross_stories": (
                None
                if self.cross_stories is None
                else {
                    label: [{"tokens": list(s), "display": detokenize(s)} for s in story]
                    for label, story in self.cross_stories
                }
            ),
            "events_applied": self.event_count,
            "turn_owner": self.turn_owner if self.mode == TURN_TAKING else None,
            "committed": self.committed_count if self.mode == TURN_TAKING else 0,
            "done": self.done,
        }


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def state_json(session: Session) -> str:
    return canonical_json(session.to_state_dict())


def create_session(
    mode: str,
    seed: int,
    session_id: str | None = None,
    model_choice: str = ModelChoice.PLAN_AND_REVISE.value,
) -> Session:
    if mode not in SESSION_MODES:
        raise ValueError(f"unknown session mode {mode!r}")
    if model_choice not in {c.value for c in ModelChoice}:
        raise ValueError(f"unknown model {model_choice!r}")
    return Session(
        id=session_id or uuid.uuid4().hex,
        mode=mode,
        rng_seed=int(seed),
        model_choice=model_choice,
    )


def admissible(mode: str, kind: str) -> bool:
    return kind in ADMISSIBLE_EVENTS[mode]


def _machine_born(item: Item) -> bool:
    return item.provenance.kind in (PROV_MACHINE, PROV_HUMAN_EDITED)


def _edited(item: Item, tokens: tuple[str, ...]) -> Item:
    if item.provenance.kind == PROV_MACHINE:
        prov = Provenance(kind=PROV_HUMAN_EDITED, original=detokenize(item.tokens))
    elif item.provenance.kind == PROV_HUMAN_EDITED:
        prov = item.provenance  # keep the first machine original
    else:
        prov = Provenance(kind=PROV_HUMAN)
    return Item(tokens=tokens, provenance=prov)


def apply_event(session: Session, event: Event, engine: Engine) -> Session:
    """Apply one event, returning the new state.

    Raises InadmissibleEvent (with the violated rule's name) for events the
    mode gating or session state rejects; generation failures propagate as
    GenerationError.
    """
    if session.done:
        raise InadmissibleEvent("session-done", "no events accepted after done")
    if not admissible(session.mode, event.kind):
        raise InadmissibleEvent(
            f"mode-{session.mode}-forbids-{event.kind}",
            f"{event.kind} is not available in mode {session.mode}",
        )
    event_index = session.event_count
    new = replace(session, event_count=session.event_count + 1)
    kind = event.kind

    if kind == SET_TOPIC:
        tokens = tuple(engine.resolve_text(event.text or ""))
        if not tokens:
            raise InadmissibleEvent("empty-text", "topic must contain at least one token")
        return replace(new, topic=tokens)

    if kind == SET_DIVERSITY:
        diversity = DiversitySettings(
            plan_temperature=(
                event.plan_temperature
                if event.plan_temperature is not None
                else session.diversity.plan_temperature
            ),
            story_temperature=(
                event.story_temperature
                if event.story_temperature is not None
                else session.diversity.story_temperature
            ),
        )
        try:
            diversity.validate(engine.temperature_bounds)
        except ValueError as exc:
            raise InadmissibleEvent("diversity-bounds", str(exc)) from exc
        return replace(new, diversity=diversity)

    if kind == SELECT_MODEL:
        if event.choice not in {c.value for c in ModelChoice}:
            raise InadmissibleEvent("unknown-model", f"no model named {event.choice!r}")
        new = replace(new, model_choice=event.choice)
        if session.cross_stories is not None:
            chosen = dict(session.cross_stories)[event.choice]
            items = tuple(
                Item(tokens=s, provenance=Provenance(PROV_MACHINE)) for s in chosen
            )
            new = replace(new, story_items=items)
        return new

    if kind in (GENERATE_PHRASE, GENERATE_ALL_PHRASES, GENERATE_SENTENCE,
                GENERATE_ALL_SENTENCES, REGENERATE_PHRASE, REGENERATE_SENTENCE):
        if not session.topic:
            raise InadmissibleEvent("topic-required", "set a topic before generating")

    if kind == GENERATE_PHRASE:
        if len(session.storyline_items) >= SENTENCES_PER_STORY:
            raise InadmissibleEvent("storyline-complete")
        phrase = engine.plan_next_phrase(
            session.topic,
            [item.tokens for item in session.storyline_items],
            session.diversity,
            seed=subseed(session.rng_seed, event_index),
        )
        return replace(
            new,
            storyline_items=session.storyline_items
            + (Item(tokens=phrase, provenance=Provenance(PROV_MACHINE)),),
        )

    if kind == GENERATE_ALL_PHRASES:
        items = list(session.storyline_items)
        if len(items) >= SENTENCES_PER_STORY:
            raise InadmissibleEvent("storyline-complete")
        slot = 0
        while len(items) < SENTENCES_PER_STORY:
            phrase = engine.plan_next_phrase(
                session.topic,
                [item.tokens for item in items],
                session.diversity,
                seed=subseed(session.rng_seed, event_index, slot),
            )
            items.append(Item(tokens=phrase, provenance=Provenance(PROV_MACHINE)))
            slot += 1
        return replace(new, storyline_items=tuple(items))

    if kind == EDIT_PHRASE:
        tokens = tuple(engine.resolve_text(event.text or ""))
        if not tokens:
            raise InadmissibleEvent("empty-text")
        items = list(session.storyline_items)
        index = event.index if event.index is not None else len(items)
        if index == len(items):
            if len(items) >= SENTENCES_PER_STORY:
                raise InadmissibleEvent("storyline-complete")
            items.append(Item(tokens=tokens, provenance=Provenance(PROV_HUMAN)))
        elif 0 <= index < len(items):
            items[index] = _edited(items[index], tokens)
        else:
            raise InadmissibleEvent("index-out-of-range", f"phrase {index}")
        return replace(new, storyline_items=tuple(items))

    if kind == DELETE_PHRASE:
        items = list(session.storyline_items)
        index = event.index if event.index is not None else -1
        if not 0 <= index < len(items):
            raise InadmissibleEvent("index-out-of-range", f"phrase {index}")
        del items[index]
        return replace(new, storyline_items=tuple(items))

    if kind == REGENERATE_PHRASE:
        items = list(session.storyline_items)
        index = event.index if event.index is not None else -1
        if not 0 <= index < len(items):
            raise InadmissibleEvent("index-out-of-range", f"phrase {index}")
        upstream = [item.tokens for item in items[:index]]
        others = [item.tokens for k, item in enumerate(items) if k != index]
        phrase = _distinct_phrase(engine, session, upstream, others, event_index)
        items[index] = Item(tokens=phrase, provenance=Provenance(PROV_MACHINE))
        return replace(new, storyline_items=tuple(items))

    if kind == GENERATE_SENTENCE:
        if session.mode == TURN_TAKING and session.turn_owner != OWNER_MACHINE:
            raise InadmissibleEvent("not-your-turn", "machine generates only on its turn")
        if len(session.story_items) >= SENTENCES_PER_STORY:
            raise InadmissibleEvent("story-complete")
        sentence = _generate_sentence(
            engine, session, list(session.story_items), event_index, 0
        )
        new = replace(
            new,
            story_items=session.story_items
            + (Item(tokens=sentence, provenance=Provenance(PROV_MACHINE)),),
        )
        if session.mode == TURN_TAKING:
            new = replace(new, turn_owner=OWNER_HUMAN)
        return new

    if kind == GENERATE_ALL_SENTENCES:
        if session.mode == DIVERSITY_ONLY:
            return _cross_generate(engine, new, session, event_index)
        items = list(session.story_items)
        if len(items) >= SENTENCES_PER_STORY:
            raise InadmissibleEvent("story-complete")
        slot = 0
        while len(items) < SENTENCES_PER_STORY:
            sentence = _generate_sentence(engine, session, items, event_index, slot)
            items.append(Item(tokens=sentence, provenance=Provenance(PROV_MACHINE)))
            slot += 1
        return replace(new, story_items=tuple(items))

    if kind == EDIT_SENTENCE:
        return _edit_sentence(engine, new, session, event)

    if kind == DELETE_SENTENCE:
        items = list(session.story_items)
        index = event.index if event.index is not None else -1
        if not 0 <= index < len(items):
            raise InadmissibleEvent("index-out-of-range", f"sentence {index}")
        del items[index]
        return replace(new, story_items=tuple(items))

    if kind == REGENERATE_SENTENCE:
        items = list(session.story_items)
        index = event.index if event.index is not None else -1
        if not 0 <= index < len(items):
            raise InadmissibleEvent("index-out-of-range", f"sentence {index}")
        sentence = _generate_sentence(engine, session, items[:index], event_index, 0)
        items[index] = Item(tokens=sentence, provenance=Provenance(PROV_MACHINE))
        return replace(new, story_items=tuple(items))

    if kind == COMMIT_TURN:
        if session.turn_owner != OWNER_HUMAN:
            raise InadmissibleEvent("not-your-turn", "only the human commits a turn")
        if not session.story_items or session.story_items[-1].provenance.kind != PROV_HUMAN:
            raise InadmissibleEvent("empty-turn", "write a sentence before committing")
        return replace(
            new,
            committed_count=len(session.story_items),
            turn_owner=OWNER_MACHINE,
        )

    if kind == DONE:
        return replace(new, done=True)

    raise InadmissibleEvent("unknown-event", event.kind)  # pragma: no cover


def _distinct_phrase(engine, session, upstream, others, event_index):
    # Resample until the phrase differs from every other storyline slot.
    for attempt in range(25):
        phrase = engine.plan_next_phrase(
            session.topic,
            upstream,
            session.diversity,
            seed=subseed(session.rng_seed, event_index, attempt),
        )
        if tuple(phrase) not in {tuple(o) for o in others}:
            return phrase
    raise GenerationError("could not regenerate a distinct phrase")


def _storyline_for_writer(session: Session) -> list[tuple[str, ...]] | None:
    if session.mode == TURN_TAKING:
        return None
    return [item.tokens for item in session.storyline_items]


def _choice_for(session: Session) -> ModelChoice:
    if session.mode == TURN_TAKING:
        return ModelChoice.TITLE_TO_STORY
    return ModelChoice(session.model_choice)


def _generate_sentence(engine, session, story_items, event_index, slot):
    choice = _choice_for(session)
    storyline = _storyline_for_writer(session)
    if choice is not ModelChoice.TITLE_TO_STORY and not storyline:
        raise InadmissibleEvent("storyline-required", "generate or write phrases first")
    params = dataclasses.replace(
        engine.decode_defaults, seed=subseed(session.rng_seed, event_index, slot)
    )
    return engine.write_next_sentence(
        choice,
        session.topic,
        storyline,
        [item.tokens for item in story_items],
        session.diversity,
        params,
    )


def _cross_generate(engine, new, session, event_index):
    result = engine.cross_model_generate(
        session.topic, session.diversity, seed=subseed(session.rng_seed, event_index)
    )
    storyline_items = tuple(
        Item(tokens=tuple(p), provenance=Provenance(PROV_MACHINE)) for p in result.storyline
    )
    cross = tuple(
        (label, tuple(tuple(s) for s in result.stories[label])) for label in result.labels
    )
    chosen = dict(cross)[session.model_choice]
    story_items = tuple(
        Item(tokens=s, provenance=Provenance(PROV_MACHINE)) for s in chosen
    )
    return replace(
        new,
        storyline_items=storyline_items,
        cross_stories=cross,
        story_items=story_items,
    )


def _edit_sentence(engine, new, session, event):
    tokens = tuple(engine.resolve_text(event.text or ""))
    if not tokens:
        raise InadmissibleEvent("empty-text")
    items = list(session.story_items)
    index = event.index if event.index is not None else len(items)
    if session.mode == TURN_TAKING:
        if session.turn_owner != OWNER_HUMAN:
            raise InadmissibleEvent("not-your-turn", "wait for the machine's sentence")
        if index < session.committed_count:
            raise InadmissibleEvent("read-only", f"sentence {index} was committed earlier")
    if index == len(items):
        if len(items) >= SENTENCES_PER_STORY:
            raise InadmissibleEvent("story-complete")
        if session.mode == TURN_TAKING and items and not _machine_born(items[-1]):
            raise InadmissibleEvent(
                "alternation", "commit your turn so the machine can write next"
            )
        items.append(Item(tokens=tokens, provenance=Provenance(PROV_HUMAN)))
    elif 0 <= index < len(items):
        items[index] = _edited(items[index], tokens)
    else:
        raise InadmissibleEvent("index-out-of-range", f"sentence {index}")
    return replace(new, story_items=tuple(items))


def export_story(session: Session) -> str:
    """Detokenized story text; requires at least one sentence."""
    if not session.story_items:
        raise ValueError("empty story")
    return " ".join(detokenize(item.tokens) for item in session.story_items)


# Event-log persistence: JSON lines, one header record then one event per line.


def log_header(session: Session) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "type": "create",
        "id": session.id,
        "mode": session.mode,
        "seed": session.rng_seed,
        "model": session.model_choice,
    }


def write_log(path: str | Path, session: Session, events: Sequence[Event]) -> None:
    lines = [canonical_json(log_header(session))]
    lines.extend(canonical_json(e.to_dict()) for e in events)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def append_event(path: str | Path, event: Event) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(canonical_json(event.to_dict()) + "\n")


def read_log(path: str | Path) -> tuple[dict, list[Event]]:
    lines = [l for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
    if not lines:
        raise ReplayError("empty log")
    header = json.loads(lines[0])
    if header.get("type") != "create" or header.get("schema") != SCHEMA_VERSION:
        raise ReplayError("bad log header")
    events = []
    for n, line in enumerate(lines[1:], start=1):
        try:
            events.append(Event.from_dict(json.loads(line)))
        except (json.JSONDecodeError, ReplayError, TypeError) as exc:
            raise ReplayError(f"entry {n}: {exc}") from exc
    return header, events


def replay(header: dict, events: Iterable[Event], engine: Engine) -> Session:
    """Rebuild a session from its creation record and event list."""
    session = create_session(
        mode=header["mode"],
        seed=header["seed"],
        session_id=header["id"],
        model_choice=header.get("model", ModelChoice.PLAN_AND_REVISE.value),
    )
    for n, event in enumerate(events, start=1):
        try:
            session = apply_event(session, event, engine)
        except (InadmissibleEvent, GenerationError) as exc:
            raise ReplayError(f"entry {n}: {exc}") from exc
    return session


def replay_file(path: str | Path, engine: Engine) -> Session:
    header, events = read_log(path)
    return replay(header, events, engine)
