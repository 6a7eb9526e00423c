/** Side panels: conversational supplements, revision history diffs, run results. */

import type { DiffReply, RunResultReply, TreeView } from "./types.js";
import { nodeById } from "./state.js";

export interface PanelGestures {
  submitSupplement(block: string, text: string): void;
  slideTo(block: string, a: number, b: number): void;
  runBlock(block: string): void;
}

export function renderSupplementPanel(
  container: HTMLElement,
  tree: TreeView,
  block: string | null,
  gestures: PanelGestures,
): void {
  container.textContent = "";
  if (!block) return;
  const node = nodeById(tree, block);
  const heading = document.createElement("div");
  heading.className = "panel-heading";
  heading.textContent = `Supplements for ${node.prompt} (${node.badge_count})`;
  container.appendChild(heading);

  const entry = document.createElement("input");
  entry.className = "supplement-entry";
  entry.placeholder = "add detail for the model";
  const submit = document.createElement("button");
  submit.className = "supplement-submit";
  submit.textContent = "send";
  submit.addEventListener("click", () => {
    if (entry.value.trim()) gestures.submitSupplement(block, entry.value.trim());
  });
  container.append(entry, submit);
}

export function renderHistoryPanel(
  container: HTMLElement,
  tree: TreeView,
  block: string | null,
  diff: DiffReply | null,
  gestures: PanelGestures,
): void {
  container.textContent = "";
  if (!block) return;
  const node = nodeById(tree, block);
  const slider = document.createElement("input");
  slider.type = "range";
  slider.className = "revision-slider";
  slider.min = "1";
  slider.max = String(Math.max(node.revision_count, 1));
  slider.value = slider.max;
  slider.addEventListener("change", () => {
    const b = Number(slider.value);
    const a = Math.max(1, b - 1);
    gestures.slideTo(block, a, b);
  });
  container.appendChild(slider);

  if (diff) {
    const view = document.createElement("div");
    view.className = "diff";
    for (const [klass, hunks] of [
      ["diff-prompt", diff.prompt_hunks],
      ["diff-code", diff.code_hunks],
    ] as const) {
      const section = document.createElement("div");
      section.className = klass;
      for (const hunk of hunks) {
        for (const line of hunk.a_lines) {
          const del = document.createElement("div");
          del.className = "del";
          del.textContent = `- ${line}`;
          section.appendChild(del);
        }
        for (const line of hunk.b_lines) {
          const ins = document.createElement("div");
          ins.className = "ins";
          ins.textContent = `+ ${line}`;
          section.appendChild(ins);
        }
      }
      view.appendChild(section);
    }
    container.appendChild(view);
  }
}

export function renderResultsPanel(
  container: HTMLElement,
  result: RunResultReply | null,
): void {
  container.textContent = "";
  if (!result) return;
  const status = document.createElement("div");
  status.className = "run-status";
  status.textContent = `exit ${result.exit_status}`;
  container.appendChild(status);

  for (const [klass, text] of [
    ["run-stdout", result.stdout],
    ["run-stderr", result.stderr],
  ] as const) {
    if (!text) continue;
    const pre = document.createElement("pre");
    pre.className = klass;
    pre.textContent = text;
    container.appendChild(pre);
  }
  for (const name of result.artifacts) {
    const data = result.artifact_data[name];
    if (data && /\.(png|jpg|jpeg|gif|svg)$/.test(name)) {
      const image = document.createElement("img");
      image.className = "artifact";
      image.alt = name;
      image.src = `data:image/*;base64,${data}`;
      container.appendChild(image);
    } else {
      const row = document.createElement("div");
      row.className = "artifact-name";
      row.textContent = name;
      container.appendChild(row);
    }
  }
}
