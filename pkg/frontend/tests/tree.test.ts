import { describe, expect, it } from "vitest";

import { TreeView } from "../src/tree.js";
import type { SessionNodeJson } from "../src/types.js";

function node(
  id: string,
  parent: string | null,
  newText: string,
): SessionNodeJson {
  return {
    id,
    parent,
    text: "",
    new_text: newText,
    chosen_topics: [],
    chosen_words: [],
    options: [],
  };
}

describe("tree view", () => {
  it("root navigation restores the original breadcrumb", () => {
    const tree = TreeView.fromSession([node("n0", null, "once upon")], "n0");
    tree.addNode(node("n1", "n0", " a time"));
    tree.setActive("n1");
    expect(tree.breadcrumb()).toBe("once upon a time");
    tree.setActive("n0");
    expect(tree.breadcrumb()).toBe("once upon");
  });

  it("deep link by node id restores state", () => {
    const tree = TreeView.fromSession([node("n0", null, "a")], "n0");
    tree.addNode(node("n1", "n0", "b"));
    tree.addNode(node("n2", "n1", "c"));
    tree.setActive("n2");
    expect(tree.breadcrumb("n2")).toBe("abc");
    expect(tree.path("n2").map((n) => n.id)).toEqual(["n0", "n1", "n2"]);
  });

  it("random walks keep breadcrumb equal to ancestor concatenation", () => {
    const tree = TreeView.fromSession([node("n0", null, "r")], "n0");
    let next = 1;
    const ids = ["n0"];
    // deterministic LCG so the walk is reproducible
    let s = 42;
    const rand = () => {
      s = (s * 1103515245 + 12345) % 2147483648;
      return s / 2147483648;
    };
    for (let step = 0; step < 20; step++) {
      const parent = ids[Math.floor(rand() * ids.length)];
      const id = `n${next++}`;
      tree.addNode(node(id, parent, `[${id}]`));
      ids.push(id);
      tree.setActive(id);
      const expected = tree
        .path(id)
        .map((n) => n.newText)
        .join("");
      expect(tree.breadcrumb()).toBe(expected);
      expect(expected.endsWith(`[${id}]`)).toBe(true);
    }
    expect(tree.nodes.size).toBe(21);
  });

  it("rejects unknown parents and unknown nodes", () => {
    const tree = TreeView.fromSession([node("n0", null, "r")], "n0");
    expect(() => tree.addNode(node("n9", "nope", "x"))).toThrow(/unknown/);
    expect(() => tree.setActive("zzz")).toThrow(/unknown/);
  });
});
