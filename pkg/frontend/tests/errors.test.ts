import { describe, expect, it } from "vitest";

import { HttpError, type Transport } from "../src/api.js";
import { SteeringApp, toCards } from "../src/state.js";
import type { SessionJson } from "../src/types.js";

const session: SessionJson = {
  id: "s1",
  root_id: "n0",
  nodes: [
    {
      id: "n0",
      parent: null,
      text: "hello world",
      new_text: "hello world",
      chosen_topics: [],
      chosen_words: [],
      options: [],
    },
  ],
};

function failingTransport(status: number): Transport {
  return {
    async topics() {
      throw new HttpError(status, "no_model", "no model checkpoint is loaded");
    },
    async createSession() {
      return session;
    },
    async expand() {
      throw new Error("should not be called");
    },
    async getSession() {
      return session;
    },
  };
}

describe("error handling", () => {
  it("503 shows an error state with zero cards and an intact tree", async () => {
    const app = new SteeringApp(failingTransport(503), 10);
    await app.start("hello world");
    expect(app.phase).toBe("error");
    expect(app.cards.length).toBe(0);
    expect(app.lastError).toMatch(/no model/);
    // the tree is untouched and a retry can re-derive everything from it
    expect(app.tree.nodes.size).toBe(1);
    expect(app.tree.breadcrumb()).toBe("hello world");
  });

  it("cards are marked stale while a fetch is in flight", async () => {
    let release: (v: { topics: [] }) => void = () => {};
    const transport: Transport = {
      topics: () => new Promise((res) => (release = res)),
      createSession: async () => session,
      expand: async () => {
        throw new Error("unused");
      },
      getSession: async () => session,
    };
    const app = new SteeringApp(transport, 10);
    const started = app.start("hello world");
    await new Promise((r) => setTimeout(r, 0));
    expect(app.phase).toBe("fetching-topics");
    expect(app.topicsStale).toBe(true);
    release({ topics: [] });
    await started;
    expect(app.topicsStale).toBe(false);
    expect(app.phase).toBe("steering");
  });
});

describe("card weight bars", () => {
  it("scale cosines linearly onto [0, 1] per card", () => {
    const cards = toCards(
      [{ id: 0, words: [
        { w: "a", cos: 0.9 },
        { w: "b", cos: 0.7 },
        { w: "c", cos: 0.5 },
      ] }],
      new Set(),
    );
    expect(cards[0].bars[0]).toBeCloseTo(1);
    expect(cards[0].bars[1]).toBeCloseTo(0.5);
    expect(cards[0].bars[2]).toBeCloseTo(0);
  });
});
