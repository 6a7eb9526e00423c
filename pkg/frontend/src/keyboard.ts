/** Keyboard shortcuts: arrows move through blocks, Enter starts editing,
 * Escape commits it, Alt+arrows create siblings/children, Alt+Enter lists
 * steps for the selected block. */

export interface KeyboardTarget {
  moveSelection(delta: 1 | -1): void;
  beginEditSelected(): void;
  commitEditSelected(): void;
  addSiblingOfSelected(): void;
  addChildOfSelected(): void;
  listStepsSelected(): void;
}

export function handleKey(event: KeyboardEvent, target: KeyboardTarget): boolean {
  const alt = event.altKey;
  switch (event.key) {
    case "ArrowDown":
      if (alt) target.addChildOfSelected();
      else target.moveSelection(1);
      return true;
    case "ArrowUp":
      if (alt) target.addSiblingOfSelected();
      else target.moveSelection(-1);
      return true;
    case "Enter":
      if (alt) target.listStepsSelected();
      else target.beginEditSelected();
      return true;
    case "Escape":
      target.commitEditSelected();
      return true;
    default:
      return false;
  }
}

export function installKeyboard(root: HTMLElement, target: KeyboardTarget): void {
  root.addEventListener("keydown", (event) => {
    if (handleKey(event as KeyboardEvent, target)) {
      event.preventDefault();
    }
  });
}
