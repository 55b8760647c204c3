// Browser glue: wires the pure renderers and the API client to the DOM.
// Generation latency is user-visible by design (spinner, no optimistic
// updates); the session timer is informational and never enforced.

import { ApiClient, ApiError } from "./api.js";
import {
  renderCrossView,
  renderEditor,
  renderError,
  renderModePicker,
  renderTimer,
} from "./render.js";
import type { EventBody, SessionMode, SessionState } from "./types.js";
import { beginEvent, freshViewModel, withError, withServerState } from "./viewmodel.js";

const client = new ApiClient("");
let vm = freshViewModel();

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function setBusy(busy: boolean): void {
  $("spinner").style.display = busy ? "inline-block" : "none";
}

function paintEditor(): void {
  const host = $("editor-host");
  const banner = vm.error ? renderError(vm.error, vm.errorRule ?? undefined) : "";
  host.innerHTML = vm.state ? banner + renderEditor(vm.state) : banner;
}

async function runEvent(event: EventBody): Promise<void> {
  if (!vm.state) return;
  const sessionId = vm.state.id;
  try {
    vm = beginEvent(vm);
  } catch {
    return; // one in-flight event per session
  }
  setBusy(true);
  try {
    const state = await client.postEvent(sessionId, event);
    vm = withServerState(vm, state);
  } catch (err) {
    if (err instanceof ApiError) {
      vm = withError(vm, err.message, err.rule);
    } else {
      vm = withError(vm, String(err));
    }
  } finally {
    setBusy(false);
    paintEditor();
  }
}

function eventForAction(action: string, index: number, state: SessionState): EventBody | null {
  switch (action) {
    case "generate-phrase":
      return { kind: "generate_phrase" };
    case "generate-all-phrases":
      return { kind: "generate_all_phrases" };
    case "generate-sentence":
      return { kind: "generate_sentence" };
    case "generate-all-sentences":
      return { kind: "generate_all_sentences" };
    case "regenerate-phrase":
      return { kind: "regenerate_phrase", index };
    case "regenerate-sentence":
      return { kind: "regenerate_sentence", index };
    case "delete-phrase":
      return { kind: "delete_phrase", index };
    case "delete-sentence":
      return { kind: "delete_sentence", index };
    case "commit-turn":
      return { kind: "commit_turn" };
    case "set-topic": {
      const text = window.prompt("topic");
      return text ? { kind: "set_topic", text } : null;
    }
    case "edit-phrase": {
      const text = window.prompt("phrase", state.storyline[index]?.display ?? "");
      return text ? { kind: "edit_phrase", index, text } : null;
    }
    case "add-phrase": {
      const text = window.prompt("new phrase");
      return text ? { kind: "edit_phrase", index: state.storyline.length, text } : null;
    }
    case "edit-sentence": {
      const text = window.prompt("sentence", state.story[index]?.display ?? "");
      return text ? { kind: "edit_sentence", index, text } : null;
    }
    case "add-sentence": {
      const text = window.prompt("new sentence");
      return text ? { kind: "edit_sentence", index: state.story.length, text } : null;
    }
    default:
      return null;
  }
}

async function startSession(): Promise<void> {
  const mode = ($("mode-select") as HTMLSelectElement).value as SessionMode;
  setBusy(true);
  try {
    const state = await client.createSession(mode);
    vm = withServerState(freshViewModel(), state);
    const topic = window.prompt("topic for this session");
    if (topic) {
      vm = beginEvent(vm);
      const next = await client.postEvent(state.id, { kind: "set_topic", text: topic });
      vm = withServerState(vm, next);
    }
  } catch (err) {
    vm = withError(vm, err instanceof ApiError ? err.message : String(err));
  } finally {
    setBusy(false);
    paintEditor();
  }
}

async function runCross(): Promise<void> {
  const topic = ($("cross-topic") as HTMLInputElement).value.trim();
  if (!topic) return;
  const plan = parseFloat(($("plan-temp") as HTMLInputElement).value);
  const storyRaw = ($("story-temp") as HTMLInputElement).value;
  const story = storyRaw === "" ? undefined : parseFloat(storyRaw);
  setBusy(true);
  try {
    const cross = await client.cross(topic, plan, story);
    $("cross-host").innerHTML = renderCrossView(cross);
  } catch (err) {
    $("cross-host").innerHTML = renderError(
      err instanceof ApiError ? err.message : String(err),
      err instanceof ApiError ? err.rule : undefined,
    );
  } finally {
    setBusy(false);
  }
}

export async function boot(): Promise<void> {
  const models = await client.models();
  $("mode-picker").innerHTML = renderModePicker(models.modes);
  ($("plan-temp") as HTMLInputElement).value = String(
    models.default_diversity.plan_temperature,
  );
  $("mode-picker").addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    if (target.dataset.action === "start-session") void startSession();
  });
  $("cross-run").addEventListener("click", () => void runCross());
  $("editor-host").addEventListener("click", (ev) => {
    const target = (ev.target as HTMLElement).closest("[data-action]") as HTMLElement | null;
    if (!target || !vm.state) return;
    const event = eventForAction(
      target.dataset.action ?? "",
      Number(target.dataset.index ?? -1),
      vm.state,
    );
    if (event) void runEvent(event);
  });
  window.setInterval(() => {
    $("timer").textContent = renderTimer(vm.startedAt, Date.now());
  }, 1000);
}

if (typeof document !== "undefined" && document.getElementById("mode-picker")) {
  void boot();
}
