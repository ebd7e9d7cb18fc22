import type { SessionNodeJson } from "./types.js";

export interface TreeNode {
  id: string;
  parent: string | null;
  newText: string;
  chosenTopics: number[];
  chosenWords: string[];
  children: string[];
}

/** Client mirror of the server session tree plus the active-branch cursor. */
export class TreeView {
  nodes = new Map<string, TreeNode>();
  rootId = "";
  activeId = "";

  static fromSession(nodes: SessionNodeJson[], rootId: string): TreeView {
    const tree = new TreeView();
    tree.rootId = rootId;
    tree.activeId = rootId;
    for (const n of nodes) tree.addNode(n);
    return tree;
  }

  addNode(n: SessionNodeJson): TreeNode {
    const node: TreeNode = {
      id: n.id,
      parent: n.parent,
      newText: n.new_text,
      chosenTopics: [...n.chosen_topics],
      chosenWords: [...n.chosen_words],
      children: [],
    };
    this.nodes.set(node.id, node);
    if (node.parent !== null) {
      const parent = this.nodes.get(node.parent);
      if (!parent) throw new Error(`unknown parent ${node.parent}`);
      parent.children.push(node.id);
    }
    return node;
  }

  node(id: string): TreeNode {
    const n = this.nodes.get(id);
    if (!n) throw new Error(`unknown node ${id}`);
    return n;
  }

  get active(): TreeNode {
    return this.node(this.activeId);
  }

  setActive(id: string): void {
    this.node(id);
    this.activeId = id;
  }

  /** Ancestor chain of a node, root first. */
  path(id: string): TreeNode[] {
    const out: TreeNode[] = [];
    let cur: TreeNode | null = this.node(id);
    const seen = new Set<string>();
    while (cur) {
      if (seen.has(cur.id)) throw new Error("cycle in session tree");
      seen.add(cur.id);
      out.unshift(cur);
      cur = cur.parent === null ? null : this.node(cur.parent);
    }
    return out;
  }

  /** Accepted text down to a node: the concatenated ancestor spans. */
  breadcrumb(id?: string): string {
    return this.path(id ?? this.activeId)
      .map((n) => n.newText)
      .join("");
  }
}
