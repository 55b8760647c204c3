// Pure rendering: state JSON in, HTML strings out. Provenance styling is
// a function of the state alone so it can be verified without a browser:
// human-inserted text gets the blue-underline class, edited machine text
// keeps its original as grey strikethrough, and every machine item carries
// a regenerate affordance. Committed turn-taking sentences render locked.

import type {
  CrossResponse,
  Item,
  Provenance,
  SessionMode,
  SessionState,
} from "./types.js";

export const MODEL_TITLES: Record<string, string> = {
  title2story: "Title to Story",
  planwrite: "Plan and Write",
  planrevise: "Plan and Revise",
};

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function provenanceClass(prov: Provenance): string {
  switch (prov.kind) {
    case "human":
      return "prov-human";
    case "human_edited":
      return "prov-human-edited";
    default:
      return "prov-machine";
  }
}

// Presentation-side mirror of the server's mode gating; the server stays
// authoritative and any drift surfaces as a 409 banner.
const PHRASE_EDIT_MODES: SessionMode[] = ["storyline_only", "all"];
const SENTENCE_EDIT_MODES: SessionMode[] = ["story_only", "all", "turn_taking"];
const REGEN_SENTENCE_MODES: SessionMode[] = ["storyline_only", "story_only", "all"];

export function canEditPhrases(mode: SessionMode): boolean {
  return PHRASE_EDIT_MODES.includes(mode);
}

export function canEditSentences(mode: SessionMode): boolean {
  return SENTENCE_EDIT_MODES.includes(mode);
}

export function sentenceLocked(state: SessionState, index: number): boolean {
  return state.mode === "turn_taking" && index < state.committed;
}

function itemBody(item: Item): string {
  const cls = provenanceClass(item.provenance);
  const original =
    item.provenance.kind === "human_edited" && item.provenance.original
      ? `<del class="prov-removed">${escapeHtml(item.provenance.original)}</del> `
      : "";
  return `${original}<span class="${cls}">${escapeHtml(item.display)}</span>`;
}

export function renderPhraseChip(item: Item, index: number, state: SessionState): string {
  const editable = canEditPhrases(state.mode);
  const buttons = editable
    ? `<button data-action="edit-phrase" data-index="${index}" title="edit">✎</button>` +
      `<button data-action="regenerate-phrase" data-index="${index}" title="regenerate">↻</button>` +
      `<button data-action="delete-phrase" data-index="${index}" title="delete">✕</button>`
    : "";
  return (
    `<span class="chip" data-kind="phrase" data-index="${index}">` +
    `${itemBody(item)}${buttons}</span>`
  );
}

export function renderSentenceRow(item: Item, index: number, state: SessionState): string {
  const locked = sentenceLocked(state, index);
  const editable = canEditSentences(state.mode) && !locked;
  const regen = REGEN_SENTENCE_MODES.includes(state.mode);
  const buttons =
    (editable
      ? `<button data-action="edit-sentence" data-index="${index}" title="edit">✎</button>`
      : "") +
    (regen
      ? `<button data-action="regenerate-sentence" data-index="${index}" title="regenerate">↻</button>`
      : "") +
    (editable && state.mode !== "turn_taking"
      ? `<button data-action="delete-sentence" data-index="${index}" title="delete">✕</button>`
      : "");
  const lockMark = locked ? `<span class="lock" title="committed">🔒</span>` : "";
  return (
    `<div class="sentence-row${locked ? " locked" : ""}" data-kind="sentence" ` +
    `data-index="${index}">${lockMark}${itemBody(item)}${buttons}</div>`
  );
}

export function renderStoryline(state: SessionState): string {
  if (state.mode === "turn_taking") {
    return "";
  }
  const chips = state.storyline.map((item, i) => renderPhraseChip(item, i, state));
  const addChip =
    canEditPhrases(state.mode) && state.storyline.length < 5
      ? `<button data-action="add-phrase">+ phrase</button>`
      : "";
  const generate =
    state.storyline.length < 5
      ? `<button data-action="generate-phrase">machine phrase</button>` +
        `<button data-action="generate-all-phrases">finish storyline</button>`
      : "";
  return (
    `<section class="storyline"><h3>Storyline</h3>` +
    `<div class="chips">${chips.join("")}${addChip}</div>` +
    `<div class="controls">${generate}</div></section>`
  );
}

export function renderStory(state: SessionState): string {
  const rows = state.story.map((item, i) => renderSentenceRow(item, i, state));
  const turnNote =
    state.mode === "turn_taking"
      ? `<p class="turn-note">turn: <b>${state.turn_owner}</b>` +
        (state.turn_owner === "human"
          ? ` — write a sentence, then <button data-action="commit-turn">commit turn</button>`
          : ` — <button data-action="generate-sentence">let the machine write</button>`) +
        `</p>`
      : "";
  const add =
    canEditSentences(state.mode) && state.story.length < 5
      ? `<button data-action="add-sentence">+ write sentence</button>`
      : "";
  const generate =
    state.mode !== "turn_taking" && state.story.length < 5
      ? `<button data-action="generate-sentence">machine sentence</button>` +
        `<button data-action="generate-all-sentences">finish story</button>`
      : "";
  return (
    `<section class="story"><h3>Story</h3>${turnNote}` +
    `<div class="rows">${rows.join("")}</div>` +
    `<div class="controls">${add}${generate}</div></section>`
  );
}

export function renderEditor(state: SessionState): string {
  return (
    `<div class="editor" data-session="${state.id}" data-mode="${state.mode}">` +
    `<p class="topic">topic: <b>${escapeHtml(state.topic_display)}</b> ` +
    `<button data-action="set-topic">change</button></p>` +
    renderStoryline(state) +
    renderStory(state) +
    `<p class="session-meta">mode ${state.mode}, model ${state.model}, ` +
    `${state.events_applied} events${state.done ? ", done" : ""}</p></div>`
  );
}

export function renderCrossView(cross: CrossResponse): string {
  const columns = cross.model_labels.map((label, k) => {
    const sentences = cross.stories[k]
      .map((s) => `<p class="cross-sentence">${escapeHtml(s.display)}</p>`)
      .join("");
    return (
      `<article class="cross-story" data-model="${label}">` +
      `<h3 class="model-label">${escapeHtml(MODEL_TITLES[label] ?? label)}</h3>` +
      `${sentences}</article>`
    );
  });
  const storyline = cross.storyline
    .map((p) => `<span class="chip prov-machine">${escapeHtml(p.display)}</span>`)
    .join(" ");
  return (
    `<div class="cross-view">` +
    `<p class="topic">topic: <b>${escapeHtml(cross.topic.display)}</b></p>` +
    `<p class="cross-storyline">storyline: ${storyline}</p>` +
    `<div class="columns">${columns.join("")}</div></div>`
  );
}

export function renderModePicker(modes: SessionMode[]): string {
  const options = modes
    .map((m) => `<option value="${m}">${m.replace("_", " ")}</option>`)
    .join("");
  return (
    `<label>mode <select id="mode-select">${options}</select></label> ` +
    `<button data-action="start-session">start session</button>`
  );
}

export function renderTimer(startedAtMs: number, nowMs: number): string {
  const total = Math.max(0, Math.floor((nowMs - startedAtMs) / 1000));
  const minutes = Math.floor(total / 60);
  const seconds = total % 60;
  return `${minutes}:${String(seconds).padStart(2, "0")}`;
}

export function renderError(message: string, rule?: string): string {
  const detail = rule ? ` <code class="rule">${escapeHtml(rule)}</code>` : "";
  return `<div class="error-banner">${escapeHtml(message)}${detail}</div>`;
}
