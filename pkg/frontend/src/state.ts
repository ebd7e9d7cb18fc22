import type { Transport } from "./api.js";
import { budgetMessage, budgetOk } from "./budget.js";
import { TreeView } from "./tree.js";
import type { Topic, TopicWord } from "./types.js";

export type Phase =
  | "idle"
  | "fetching-topics"
  | "steering"
  | "generating"
  | "error";

export interface TopicCardView {
  id: number;
  words: TopicWord[];
  /** cosines scaled per card onto [0, 1], display only */
  bars: number[];
  selected: boolean;
}

export function toCards(topics: Topic[], selected: Set<number>): TopicCardView[] {
  return topics.map((t) => {
    const cos = t.words.map((w) => w.cos);
    const lo = Math.min(...cos);
    const hi = Math.max(...cos);
    const span = hi - lo;
    return {
      id: t.id,
      words: t.words,
      bars: cos.map((c) => (span > 0 ? (c - lo) / span : 1)),
      selected: selected.has(t.id),
    };
  });
}

export type Listener = () => void;

/**
 * The steering loop: fetch topics for the active node, collect a condition
 * set under the budget, generate, grow the tree, refresh topics.
 * One generation may be in flight at a time; a topic refresh started later
 * (by navigation) invalidates the one before it.
 */
export class SteeringApp {
  phase: Phase = "idle";
  k: number;
  tree = new TreeView();
  sessionId = "";
  cards: TopicCardView[] = [];
  topicsStale = true;
  selected = new Set<number>();
  words: string[] = [];
  lastError: string | null = null;
  budgetError: string | null = null;

  private listeners: Listener[] = [];
  private fetchEpoch = 0;
  private generating = false;

  constructor(private transport: Transport, k: number) {
    this.k = k;
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  async start(prompt: string): Promise<void> {
    this.phase = "fetching-topics";
    this.emit();
    try {
      const session = await this.transport.createSession(prompt);
      this.sessionId = session.id;
      this.tree = TreeView.fromSession(session.nodes, session.root_id);
      await this.refreshTopics();
    } catch (err) {
      this.fail(err);
    }
  }

  /** Cards reflect /v1/topics for the active node's full text. */
  async refreshTopics(): Promise<void> {
    const epoch = ++this.fetchEpoch;
    this.topicsStale = true;
    this.phase = "fetching-topics";
    this.emit();
    try {
      const res = await this.transport.topics(this.tree.breadcrumb());
      if (epoch !== this.fetchEpoch) return; // superseded by a newer fetch
      this.cards = toCards(res.topics, this.selected);
      this.topicsStale = false;
      this.phase = "steering";
      this.lastError = null;
      this.emit();
    } catch (err) {
      if (epoch !== this.fetchEpoch) return;
      // the tree is untouched; the UI offers a retry
      this.fail(err);
    }
  }

  toggleTopic(id: number): void {
    if (!this.cards.some((c) => c.id === id)) return;
    if (this.selected.has(id)) {
      this.selected.delete(id);
    } else {
      this.selected.add(id);
    }
    this.budgetError = budgetMessage(this.selected, this.words, this.k);
    this.cards = this.cards.map((c) => ({
      ...c,
      selected: this.selected.has(c.id),
    }));
    this.emit();
  }

  addWord(word: string): void {
    const w = word.trim();
    if (!w || this.words.includes(w)) return;
    this.words.push(w);
    this.budgetError = budgetMessage(this.selected, this.words, this.k);
    this.emit();
  }

  removeWord(word: string): void {
    this.words = this.words.filter((w) => w !== word);
    this.budgetError = budgetMessage(this.selected, this.words, this.k);
    this.emit();
  }

  get canGenerate(): boolean {
    return (
      this.phase === "steering" &&
      !this.generating &&
      budgetOk(this.selected, this.words, this.k)
    );
  }

  /**
   * Expand the active node under the chosen conditions. Never submits a
   * request that violates the budget.
   */
  async generate(seed?: number): Promise<void> {
    this.budgetError = budgetMessage(this.selected, this.words, this.k);
    if (this.budgetError !== null) {
      this.emit();
      return;
    }
    if (this.generating) return;
    this.generating = true;
    this.phase = "generating";
    this.emit();
    try {
      const node = await this.transport.expand(
        this.sessionId,
        this.tree.activeId,
        {
          topic_ids: [...this.selected].sort((a, b) => a - b),
          words: [...this.words],
          seed: seed ?? null,
        },
      );
      this.tree.addNode(node);
      this.tree.setActive(node.id);
      this.selected.clear();
      this.words = [];
      this.generating = false;
      await this.refreshTopics();
    } catch (err) {
      this.generating = false;
      this.fail(err);
    }
  }

  navigate(nodeId: string): void {
    this.tree.setActive(nodeId);
    this.selected.clear();
    this.words = [];
    this.budgetError = null;
    void this.refreshTopics();
  }

  private fail(err: unknown): void {
    this.phase = "error";
    this.lastError = err instanceof Error ? err.message : String(err);
    this.emit();
  }
}
