/** Right pane: assembled program with folding, gutter path, and highlight
 * overlays whose opacity is the link score. */

import type { DocumentView, Link, SliceView } from "./types.js";

const ENTITY_HUES: Record<string, number> = {
  variable: 210,
  function: 120,
  "data-entity": 40,
  action: 300,
};

export interface CodePaneGestures {
  editLine(lineNumber: number, text: string): void;
}

function overlayFor(links: Link[], line: number): Link[] {
  return links.filter(
    (l) => l.target.kind === "code" && l.target.line === line);
}

export function renderCodePane(
  container: HTMLElement,
  doc: DocumentView,
  slice: SliceView | null,
  links: Link[],
  gestures: CodePaneGestures,
): void {
  container.textContent = "";

  const gutter = document.createElement("div");
  gutter.className = "gutter";
  gutter.textContent = slice ? slice.path.join(" > ") : "";
  container.appendChild(gutter);

  const pre = document.createElement("pre");
  pre.className = "code";
  const text = slice ? slice.text : doc.text;
  const allLines = text ? text.split("\n").slice(0, -1) : [];
  const foldedStarts = new Map<string, number>();
  if (slice) {
    // placeholders are single lines; map them back by matching text
    for (const fold of slice.folded) foldedStarts.set(fold.placeholder, fold.first_line);
  }

  let realLine = 1;
  for (const lineText of allLines) {
    const row = document.createElement("div");
    if (slice && foldedStarts.has(lineText)) {
      row.className = "line folded";
      row.textContent = lineText;
      const fold = slice.folded.find((f) => f.placeholder === lineText)!;
      row.dataset.block = fold.block;
      realLine = fold.last_line + 1;
    } else {
      row.className = "line";
      row.dataset.line = String(realLine);
      const marks = overlayFor(links, realLine);
      if (marks.length === 0) {
        row.textContent = lineText;
      } else {
        let cursor = 0;
        for (const mark of marks) {
          const from = mark.target.start_col ?? 0;
          const to = mark.target.end_col ?? 0;
          if (from > cursor) {
            row.appendChild(document.createTextNode(lineText.slice(cursor, from)));
          }
          const highlight = document.createElement("mark");
          highlight.className = `entity-${mark.entity_type}`;
          highlight.style.opacity = String(mark.score);
          highlight.style.backgroundColor =
            `hsl(${ENTITY_HUES[mark.entity_type] ?? 0} 80% 70%)`;
          highlight.textContent = lineText.slice(from, to);
          row.appendChild(highlight);
          cursor = to;
        }
        row.appendChild(document.createTextNode(lineText.slice(cursor)));
      }
      const lineNumber = realLine;
      row.addEventListener("dblclick", () => {
        const edited = prompt("edit line", lineText);
        if (edited !== null && edited !== lineText) {
          gestures.editLine(lineNumber, edited);
        }
      });
      realLine += 1;
    }
    pre.appendChild(row);
  }
  container.appendChild(pre);
}
