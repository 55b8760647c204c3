// End-to-end checks against a live service. Enable with:
//   STORYLOOM_URL=http://127.0.0.1:8750 RUN_INTEGRATION=1 vitest run tests/integration.test.ts

import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { renderCrossView, renderEditor, sentenceLocked } from "../src/render.js";

const BASE = process.env.STORYLOOM_URL ?? "http://127.0.0.1:8750";
const enabled = process.env.RUN_INTEGRATION === "1";
const suite = enabled ? describe : describe.skip;

suite("live service", () => {
  const client = new ApiClient(BASE);

  it("cross-model view renders three labeled stories for the demo topic", async () => {
    const cross = await client.cross("the not so haunted house", 0.5, undefined, 11);
    expect(cross.model_labels).toEqual(["title2story", "planwrite", "planrevise"]);
    expect(cross.stories).toHaveLength(3);
    for (const story of cross.stories) {
      expect(story).toHaveLength(5);
    }
    const html = renderCrossView(cross);
    for (const label of cross.model_labels) {
      expect(html).toContain(`data-model="${label}"`);
    }
    expect((html.match(/cross-sentence/g) ?? []).length).toBe(15);
  });

  it("intra-model round trip: edit a phrase, regenerate downstream, styling follows", async () => {
    let state = await client.createSession("all", undefined, 21);
    state = await client.postEvent(state.id, { kind: "set_topic", text: "the misty watcher" });
    state = await client.postEvent(state.id, { kind: "generate_all_phrases" });
    state = await client.postEvent(state.id, { kind: "generate_all_sentences" });
    expect(state.storyline).toHaveLength(5);
    expect(state.story).toHaveLength(5);

    const before = state.story.map((s) => s.display);
    state = await client.postEvent(state.id, {
      kind: "edit_phrase",
      index: 1,
      text: "a flashing lens",
    });
    expect(state.storyline[1].provenance.kind).toBe("human_edited");
    expect(state.storyline[1].provenance.original).toBeTruthy();
    // editing upstream never cascades into the story by itself
    expect(state.story.map((s) => s.display)).toEqual(before);

    state = await client.postEvent(state.id, { kind: "regenerate_sentence", index: 3 });
    expect(state.story[3].provenance.kind).toBe("machine");
    expect(state.story.map((s) => s.display).slice(0, 3)).toEqual(before.slice(0, 3));

    const html = renderEditor(state);
    expect(html).toContain("prov-human-edited");
    expect(html).toContain('<del class="prov-removed">');
    expect(html).toContain(state.story[3].display.slice(0, 12));
  });

  it("turn taking blocks edits to committed sentences (UI and API agree)", async () => {
    let state = await client.createSession("turn_taking", undefined, 31);
    state = await client.postEvent(state.id, { kind: "set_topic", text: "the quiet harbor" });
    state = await client.postEvent(state.id, {
      kind: "edit_sentence",
      index: 0,
      text: "i waited by the door .",
    });
    state = await client.postEvent(state.id, { kind: "commit_turn" });
    state = await client.postEvent(state.id, { kind: "generate_sentence" });
    expect(state.committed).toBeGreaterThanOrEqual(1);

    // the UI renders the committed sentence locked, with no edit affordance
    expect(sentenceLocked(state, 0)).toBe(true);
    const html = renderEditor(state);
    expect(html).toContain("locked");

    // and a direct API attempt surfaces the 409 with the rule name
    try {
      await client.postEvent(state.id, { kind: "edit_sentence", index: 0, text: "rewrite" });
      expect.unreachable("edit of a committed sentence must be rejected");
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      expect((err as ApiError).status).toBe(409);
      expect((err as ApiError).rule).toBe("read-only");
    }
  });
});
