import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { beginEvent, freshViewModel, withError, withServerState } from "../src/viewmodel.js";
import type { SessionState } from "../src/types.js";

function fakeFetch(status: number, body: unknown, calls: unknown[][] = []) {
  const impl = async (input: string, init?: RequestInit) => {
    calls.push([input, init]);
    return {
      ok: status >= 200 && status < 300,
      status,
      json: async () => body,
    } as Response;
  };
  return { impl, calls };
}

const STATE = { schema: 1, id: "s1", mode: "all", story: [], storyline: [] };

describe("api client", () => {
  it("posts events with a json body and returns the state", async () => {
    const { impl, calls } = fakeFetch(200, { state: STATE });
    const client = new ApiClient("http://x", impl);
    const state = await client.postEvent("s1", { kind: "set_topic", text: "the fog" });
    expect(state.id).toBe("s1");
    const [url, init] = calls[0] as [string, RequestInit];
    expect(url).toBe("http://x/api/sessions/s1/events");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body as string)).toEqual({ kind: "set_topic", text: "the fog" });
  });

  it("creates sessions and unwraps the state", async () => {
    const { impl } = fakeFetch(200, { session_id: "s1", state: STATE });
    const client = new ApiClient("", impl);
    const state = await client.createSession("turn_taking", undefined, 5);
    expect(state.mode).toBe("all"); // whatever the server said wins
  });

  it("surfaces the rule name on 409", async () => {
    const { impl } = fakeFetch(409, {
      error: "read-only: sentence 0 was committed earlier",
      rule: "read-only",
    });
    const client = new ApiClient("", impl);
    await expect(client.postEvent("s1", { kind: "edit_sentence", index: 0 }))
      .rejects.toMatchObject({ status: 409, rule: "read-only" });
  });

  it("wraps 404 and 500 in ApiError", async () => {
    const notFound = new ApiClient("", fakeFetch(404, { error: "unknown session x" }).impl);
    await expect(notFound.getSession("x")).rejects.toBeInstanceOf(ApiError);
    const boom = new ApiClient(
      "",
      fakeFetch(500, { error: "generation failed", reference: "ab12" }).impl,
    );
    await expect(boom.cross("topic")).rejects.toMatchObject({ reference: "ab12" });
  });
});

describe("view model", () => {
  it("only changes state through server responses", () => {
    let vm = freshViewModel(0);
    expect(vm.state).toBeNull();
    vm = withServerState(vm, STATE as unknown as SessionState);
    expect(vm.state?.id).toBe("s1");
    expect(vm.pending).toBe(false);
  });

  it("allows one in-flight event at a time", () => {
    let vm = withServerState(freshViewModel(0), STATE as unknown as SessionState);
    vm = beginEvent(vm);
    expect(() => beginEvent(vm)).toThrow(/in flight/);
  });

  it("keeps the last server state on errors", () => {
    let vm = withServerState(freshViewModel(0), STATE as unknown as SessionState);
    vm = withError(beginEvent(vm), "read-only: nope", "read-only");
    expect(vm.state?.id).toBe("s1");
    expect(vm.errorRule).toBe("read-only");
    expect(vm.pending).toBe(false);
  });
});
