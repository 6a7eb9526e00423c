/** Left pane: indented prompt blocks with badges, buttons, and drag handles. */

import type { Span, TreeView } from "./types.js";
import type { ViewState } from "./state.js";

export interface TreeGestures {
  select(id: string): void;
  beginEdit(id: string): void;
  commitEdit(id: string, prompt: string): void;
  addSibling(id: string): void;
  addChild(id: string): void;
  remove(id: string): void;
  duplicate(id: string): void;
  generate(id: string): void;
  supplementPanel(id: string): void;
  historyPanel(id: string): void;
  drop(dragged: string, target: string): void;
  selectPhrase(id: string, start: number, end: number): void;
}

function styledPrompt(prompt: string, spans: Span[] | undefined): HTMLElement {
  const holder = document.createElement("span");
  holder.className = "prompt";
  if (!spans || spans.length === 0) {
    holder.textContent = prompt;
    return holder;
  }
  for (const span of spans) {
    const piece = document.createElement("span");
    piece.className = span.kind === "CODE" ? "mm-code" : "mm-nl";
    piece.textContent = prompt.slice(span.start, span.end);
    holder.appendChild(piece);
  }
  return holder;
}

export function renderTreePane(
  container: HTMLElement,
  tree: TreeView,
  state: ViewState,
  spansBySelected: Span[] | undefined,
  gestures: TreeGestures,
): void {
  container.textContent = "";
  const list = document.createElement("ul");
  list.className = "tree";
  for (const node of tree.nodes) {
    if (node.id === "root") continue;
    const row = document.createElement("li");
    row.className = "block" + (node.id === state.selected ? " selected" : "");
    row.dataset.id = node.id;
    row.style.paddingLeft = `${(node.depth - 1) * 16}px`;
    row.draggable = true;
    row.addEventListener("click", () => gestures.select(node.id));
    row.addEventListener("dragstart", (event) => {
      (event as DragEvent).dataTransfer?.setData("text/block", node.id);
    });
    row.addEventListener("drop", (event) => {
      const dragged = (event as DragEvent).dataTransfer?.getData("text/block");
      if (dragged && dragged !== node.id) gestures.drop(dragged, node.id);
    });

    if (state.editing && node.id === state.selected) {
      const editor = document.createElement("input");
      editor.className = "prompt-editor";
      editor.value = node.prompt;
      editor.addEventListener("keydown", (event) => {
        if ((event as KeyboardEvent).key === "Escape") {
          event.stopPropagation();
          gestures.commitEdit(node.id, editor.value);
        }
      });
      row.appendChild(editor);
    } else {
      const spans = node.id === state.selected ? spansBySelected : undefined;
      const prompt = styledPrompt(node.prompt, spans);
      prompt.addEventListener("mouseup", () => {
        const selection = window.getSelection?.();
        if (!selection || selection.isCollapsed) return;
        const text = selection.toString();
        const start = node.prompt.indexOf(text);
        if (start >= 0) gestures.selectPhrase(node.id, start, start + text.length);
      });
      row.appendChild(prompt);
    }

    if (node.badge_count > 0) {
      const badge = document.createElement("span");
      badge.className = "badge";
      badge.textContent = String(node.badge_count);
      row.appendChild(badge);
    }
    if (node.has_code) row.classList.add("has-code");

    const buttons = document.createElement("span");
    buttons.className = "block-buttons";
    const actions: Array<[string, () => void]> = [
      ["add", () => gestures.addSibling(node.id)],
      ["add-child", () => gestures.addChild(node.id)],
      ["edit", () => gestures.beginEdit(node.id)],
      ["delete", () => gestures.remove(node.id)],
      ["duplicate", () => gestures.duplicate(node.id)],
      ["generate", () => gestures.generate(node.id)],
      ["supplement", () => gestures.supplementPanel(node.id)],
      ["history", () => gestures.historyPanel(node.id)],
    ];
    for (const [name, handler] of actions) {
      const button = document.createElement("button");
      button.className = `op-${name}`;
      button.textContent = name;
      button.addEventListener("click", (event) => {
        event.stopPropagation();
        handler();
      });
      buttons.appendChild(button);
    }
    row.appendChild(buttons);
    list.appendChild(row);
  }
  container.appendChild(list);
}
