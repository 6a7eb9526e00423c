/** Client view state; the engine owns all document state. */

import type { SliceView, TreeNode, TreeView } from "./types.js";

export type Panel = "tree" | "code" | "supplement" | "history";

export class ViewState {
  selected: string | null = null;
  folds = new Map<string, boolean>();
  activePanel: Panel = "tree";
  pendingJobs: string[] = [];
  editing = false;
  slice: SliceView | null = null;

  /** Selection must always refer to an existing node (or nothing). */
  reconcile(tree: TreeView): void {
    if (this.selected && !tree.nodes.some((n) => n.id === this.selected)) {
      this.selected = null;
      this.slice = null;
      this.editing = false;
    }
  }
}

/** Pre-order ids as rendered in the tree pane (the root stays hidden). */
export function visibleOrder(tree: TreeView): string[] {
  return tree.nodes.filter((n) => n.id !== "root").map((n) => n.id);
}

export function nodeById(tree: TreeView, id: string): TreeNode {
  const node = tree.nodes.find((n) => n.id === id);
  if (!node) throw new Error(`unknown node ${id}`);
  return node;
}

export function neighbour(
  tree: TreeView, current: string | null, delta: 1 | -1,
): string | null {
  const order = visibleOrder(tree);
  if (order.length === 0) return null;
  if (current === null) return order[0];
  const at = order.indexOf(current);
  if (at < 0) return order[0];
  const next = at + delta;
  if (next < 0 || next >= order.length) return current;
  return order[next];
}
