import type { SteeringApp, TopicCardView } from "./state.js";
import type { TreeNode } from "./tree.js";

function el(tag: string, cls?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderCard(card: TopicCardView, app: SteeringApp): HTMLElement {
  const box = el("div", "card" + (card.selected ? " selected" : ""));
  box.onclick = () => app.toggleTopic(card.id);
  box.appendChild(el("div", "card-id", `#${card.id}`));
  card.words.forEach((w, i) => {
    const row = el("div", "word-row");
    const bar = el("div", "bar");
    bar.style.width = `${Math.round(card.bars[i] * 100)}%`;
    row.appendChild(el("span", "word", w.w));
    row.appendChild(bar);
    box.appendChild(row);
  });
  return box;
}

function renderTreeNode(app: SteeringApp, node: TreeNode): HTMLElement {
  const item = el("li");
  const label = node.newText.trim().slice(0, 60) || "(root)";
  const btn = el(
    "button",
    "tree-node" + (node.id === app.tree.activeId ? " active" : ""),
    label,
  );
  btn.onclick = () => app.navigate(node.id);
  item.appendChild(btn);
  if (node.children.length) {
    const ul = el("ul");
    for (const child of node.children) {
      ul.appendChild(renderTreeNode(app, app.tree.node(child)));
    }
    item.appendChild(ul);
  }
  return item;
}

/** Full redraw from the app snapshot; no incremental DOM state. */
export function render(app: SteeringApp, root: HTMLElement): void {
  root.textContent = "";

  const status = el("div", `status ${app.phase}`, app.phase);
  root.appendChild(status);
  if (app.lastError) {
    const banner = el("div", "error-banner", app.lastError);
    const retry = el("button", "retry", "retry");
    retry.onclick = () => void app.refreshTopics();
    banner.appendChild(retry);
    root.appendChild(banner);
  }
  if (app.budgetError) {
    root.appendChild(el("div", "budget-banner", app.budgetError));
  }

  const crumb = el("div", "breadcrumb");
  crumb.textContent = app.tree.nodes.size ? app.tree.breadcrumb() : "";
  root.appendChild(crumb);

  const cards = el("div", "cards" + (app.topicsStale ? " stale" : ""));
  for (const card of app.cards) cards.appendChild(renderCard(card, app));
  root.appendChild(cards);

  const wordBox = el("div", "words");
  for (const w of app.words) {
    const chip = el("span", "chip", w);
    chip.onclick = () => app.removeWord(w);
    wordBox.appendChild(chip);
  }
  const input = el("input") as HTMLInputElement;
  input.placeholder = "steer with a word…";
  input.onkeydown = (ev) => {
    if (ev.key === "Enter") {
      app.addWord(input.value);
      input.value = "";
    }
  };
  wordBox.appendChild(input);
  root.appendChild(wordBox);

  const go = el("button", "generate", "generate") as HTMLButtonElement;
  go.disabled = !app.canGenerate;
  go.onclick = () => void app.generate();
  root.appendChild(go);

  if (app.tree.nodes.size) {
    const treeBox = el("ul", "tree");
    treeBox.appendChild(renderTreeNode(app, app.tree.node(app.tree.rootId)));
    root.appendChild(treeBox);
  }
}
