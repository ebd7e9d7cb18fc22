import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import type { Transport } from "../src/api.js";
import { SteeringApp } from "../src/state.js";
import type {
  ExpandRequest,
  SessionJson,
  SessionNodeJson,
  TopicsResponse,
} from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixture = JSON.parse(
  readFileSync(join(here, "fixtures", "steering_flow.json"), "utf-8"),
);

interface Exchange {
  request: { method: string; path: string; body: unknown };
  response: unknown;
}

/** Serves the recorded exchanges in order; any deviation is a test failure. */
class RecordedTransport implements Transport {
  private cursor = 0;
  constructor(private exchanges: Exchange[]) {}

  get consumed(): number {
    return this.cursor;
  }

  private next(method: string, path: string, body: unknown): unknown {
    expect(this.cursor, "more requests than recorded").toBeLessThan(
      this.exchanges.length,
    );
    const rec = this.exchanges[this.cursor++];
    expect({ method, path, body }).toEqual({
      method: rec.request.method,
      path: rec.request.path,
      body: rec.request.body,
    });
    return rec.response;
  }

  async topics(prompt: string): Promise<TopicsResponse> {
    return this.next("POST", "/v1/topics", { prompt }) as TopicsResponse;
  }

  async createSession(prompt: string): Promise<SessionJson> {
    return this.next("POST", "/v1/sessions", { prompt }) as SessionJson;
  }

  async expand(
    sessionId: string,
    nodeId: string,
    req: ExpandRequest,
  ): Promise<SessionNodeJson> {
    return this.next(
      "POST",
      `/v1/sessions/${sessionId}/nodes/${nodeId}/expand`,
      { topic_ids: req.topic_ids, words: req.words, seed: req.seed },
    ) as SessionNodeJson;
  }

  async getSession(): Promise<SessionJson> {
    throw new Error("not in the recorded flow");
  }
}

describe("steering flow replay against the recorded server", () => {
  it("replays deterministically and grows the tree by one node", async () => {
    const transport = new RecordedTransport(fixture.exchanges);
    const app = new SteeringApp(transport, fixture.k);

    await app.start(fixture.prompt);
    expect(app.phase).toBe("steering");
    expect(app.tree.nodes.size).toBe(1);

    // cards must equal the recorded /v1/topics payload verbatim
    const recordedTopics = (fixture.exchanges[1].response as TopicsResponse)
      .topics;
    expect(app.cards.length).toBe(recordedTopics.length);
    app.cards.forEach((card, i) => {
      expect(card.id).toBe(recordedTopics[i].id);
      expect(card.words).toEqual(recordedTopics[i].words);
    });

    // choose two topics and one word, then generate
    app.toggleTopic(0);
    app.toggleTopic(2);
    app.addWord("w5");
    expect(app.canGenerate).toBe(true);
    await app.generate(7);

    expect(app.phase).toBe("steering");
    expect(app.tree.nodes.size).toBe(2);
    const child = app.tree.active;
    expect(child.parent).toBe("n0");
    expect(child.chosenTopics).toEqual([0, 2]);
    expect(child.chosenWords).toEqual(["w5"]);

    // the breadcrumb equals the server's full text for the child
    const recordedChild = fixture.exchanges[2].response as SessionNodeJson;
    expect(app.tree.breadcrumb()).toBe(recordedChild.text);

    // topics refreshed for the child text, cards from the new payload
    const refreshed = (fixture.exchanges[3].response as TopicsResponse).topics;
    app.cards.forEach((card, i) => {
      expect(card.words).toEqual(refreshed[i].words);
    });

    // the whole recorded exchange was consumed, nothing extra was sent
    expect(transport.consumed).toBe(fixture.exchanges.length);

    // selection cleared after generating
    expect(app.selected.size).toBe(0);
    expect(app.words).toEqual([]);
  });

  it("blocks K+1 conditions client-side without calling the server", async () => {
    const transport = new RecordedTransport(fixture.exchanges.slice(0, 2));
    const app = new SteeringApp(transport, fixture.k);
    await app.start(fixture.prompt);
    const consumedAfterStart = transport.consumed;

    for (const card of app.cards) app.toggleTopic(card.id); // selects K
    app.addWord("extra");
    expect(app.canGenerate).toBe(false);
    expect(app.budgetError).toMatch(/at most/);

    await app.generate(1);
    expect(transport.consumed).toBe(consumedAfterStart);
    expect(app.tree.nodes.size).toBe(1);
  });
});
