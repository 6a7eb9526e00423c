/** Two-pane companion app. The engine owns all state: the client keeps only
 * optimistic echoes of acknowledged mutations and re-hydrates on conflict,
 * so reloading the page reproduces the same view from GET tree/document. */

import { ApiClient, ApiError } from "./api.js";
import { renderCodePane } from "./code_pane.js";
import { installKeyboard, KeyboardTarget } from "./keyboard.js";
import {
  renderHistoryPanel,
  renderResultsPanel,
  renderSupplementPanel,
} from "./panels.js";
import { neighbour, nodeById, ViewState } from "./state.js";
import { renderTreePane, TreeGestures } from "./tree_pane.js";
import type {
  DiffReply,
  DocumentView,
  Link,
  RunResultReply,
  Span,
  TreeNode,
  TreeView,
} from "./types.js";

const JOB_POLL_MS = 5;

export class App implements KeyboardTarget, TreeGestures {
  readonly state = new ViewState();
  tree: TreeView = { session_id: "", nodes: [], tree_version: 0, doc_version: 0 };
  doc: DocumentView = { text: "", index: {}, tree_version: 0, doc_version: 0 };
  links: Link[] = [];
  diff: DiffReply | null = null;
  runResult: RunResultReply | null = null;
  panelBlock: string | null = null;
  toast: string | null = null;

  private spanCache = new Map<string, Span[]>();
  private queue: Promise<void> = Promise.resolve();
  private panes: Record<string, HTMLElement> = {};

  constructor(
    readonly api: ApiClient,
    readonly sessionId: string,
    readonly root: HTMLElement,
  ) {
    for (const name of ["tree-pane", "code-pane", "supplement-panel",
                        "history-panel", "results-panel", "toast"]) {
      const pane = document.createElement("div");
      pane.id = name;
      root.appendChild(pane);
      this.panes[name] = pane;
    }
    root.tabIndex = 0;
    installKeyboard(root, this);
  }

  /** Serialize actions; `idle()` resolves when everything queued has run. */
  private enqueue(work: () => Promise<void>): Promise<void> {
    this.queue = this.queue.then(work).catch((error) => {
      this.toast = error instanceof ApiError
        ? `${error.code}: ${error.message}`
        : String(error);
      this.render();
    });
    return this.queue;
  }

  idle(): Promise<void> {
    return this.queue;
  }

  async hydrate(): Promise<void> {
    this.tree = await this.api.getTree(this.sessionId);
    this.doc = await this.api.getDocument(this.sessionId);
    this.state.reconcile(this.tree);
    this.spanCache.clear();
    this.render();
  }

  // -- optimistic echoes ---------------------------------------------------

  private localNode(id: string): TreeNode {
    return nodeById(this.tree, id);
  }

  private insertEcho(anchor: string, relation: "sibling" | "child",
                     id: string, prompt: string): void {
    const anchorNode = this.localNode(anchor);
    const parentId = relation === "child" ? anchor : anchorNode.parent ?? "root";
    const parent = this.localNode(parentId);
    const node: TreeNode = {
      id, parent: parentId, children: [], prompt, folded: false,
      badge_count: 0, depth: parent.depth + 1, has_code: false,
      revision_count: 1,
    };
    if (relation === "child") {
      parent.children.push(id);
    } else {
      parent.children.splice(parent.children.indexOf(anchor) + 1, 0, id);
    }
    const rows = this.tree.nodes;
    let insertAt = rows.findIndex((n) => n.id === anchor) + 1;
    if (relation === "sibling") {
      while (insertAt < rows.length && rows[insertAt].depth > anchorNode.depth) {
        insertAt += 1;
      }
    }
    rows.splice(insertAt, 0, node);
  }

  private removeEcho(id: string): void {
    const doomed = new Set<string>();
    const mark = (nid: string) => {
      doomed.add(nid);
      this.localNode(nid).children.forEach(mark);
    };
    mark(id);
    const parent = this.localNode(this.localNode(id).parent ?? "root");
    parent.children = parent.children.filter((c) => c !== id);
    this.tree.nodes = this.tree.nodes.filter((n) => !doomed.has(n.id));
    this.state.reconcile(this.tree);
  }

  private async rollback(): Promise<void> {
    await this.hydrate();
  }

  // -- keyboard target -------------------------------------------------------

  moveSelection(delta: 1 | -1): void {
    const next = neighbour(this.tree, this.state.selected, delta);
    if (next && next !== this.state.selected) this.select(next);
  }

  beginEditSelected(): void {
    if (this.state.selected) this.beginEdit(this.state.selected);
  }

  commitEditSelected(): void {
    if (!this.state.editing || !this.state.selected) return;
    const editor = this.root.querySelector<HTMLInputElement>(".prompt-editor");
    if (editor) this.commitEdit(this.state.selected, editor.value);
  }

  addSiblingOfSelected(): void {
    // with nothing selected both shortcuts start the first top-level block
    if (this.state.selected) this.addSibling(this.state.selected);
    else this.addChild("root");
  }

  addChildOfSelected(): void {
    this.addChild(this.state.selected ?? "root");
  }

  listStepsSelected(): void {
    if (this.state.selected) this.listSteps(this.state.selected);
  }

  // -- tree gestures -----------------------------------------------------------

  select(id: string): void {
    this.enqueue(async () => {
      this.state.selected = id;
      this.state.editing = false;
      this.state.slice = await this.api.getSlice(this.sessionId, id);
      const node = this.localNode(id);
      const cacheKey = `${id}:${node.prompt}`;
      if (!this.spanCache.has(cacheKey)) {
        const reply = await this.api.getSpans(this.sessionId, id);
        this.spanCache.set(cacheKey, reply.spans);
      }
      this.render();
    });
  }

  beginEdit(id: string): void {
    this.state.selected = id;
    this.state.editing = true;
    this.render();
  }

  commitEdit(id: string, prompt: string): void {
    this.enqueue(async () => {
      this.state.editing = false;
      const before = this.localNode(id).prompt;
      if (prompt === before) {
        this.render();
        return;
      }
      this.localNode(id).prompt = prompt;  // optimistic echo
      try {
        const reply = await this.api.editPrompt(
          this.sessionId, id, prompt, this.tree.tree_version);
        this.tree.tree_version = reply.tree_version;
        this.localNode(id).revision_count += 1;
      } catch (error) {
        if (error instanceof ApiError && error.status === 409) {
          this.toast = "conflict: reloaded";
          await this.rollback();
          return;
        }
        throw error;
      }
      this.render();
    });
  }

  addSibling(id: string): void {
    this.enqueue(async () => {
      const reply = await this.api.addBlock(this.sessionId, id, "sibling", "");
      this.insertEcho(id, "sibling", reply.id!, "");
      this.tree.tree_version = reply.tree_version;
      this.state.selected = reply.id!;
      this.state.editing = true;
      this.render();
    });
  }

  addChild(id: string): void {
    this.enqueue(async () => {
      const reply = await this.api.addBlock(this.sessionId, id, "child", "");
      this.insertEcho(id, "child", reply.id!, "");
      this.tree.tree_version = reply.tree_version;
      this.state.selected = reply.id!;
      this.state.editing = true;
      this.render();
    });
  }

  remove(id: string): void {
    this.enqueue(async () => {
      const reply = await this.api.deleteBlock(this.sessionId, id);
      this.removeEcho(id);
      this.tree.tree_version = reply.tree_version;
      this.render();
    });
  }

  duplicate(id: string): void {
    this.enqueue(async () => {
      await this.api.duplicateBlock(this.sessionId, id);
      // server assigns ids for the whole copied subtree: re-hydrate
      await this.hydrate();
    });
  }

  generate(id: string): void {
    this.enqueue(async () => {
      const { job_id } = await this.api.generate(this.sessionId, id);
      await this.awaitJob(job_id);
      await this.refreshAfterJob();
    });
  }

  supplementPanel(id: string): void {
    this.panelBlock = id;
    this.state.activePanel = "supplement";
    this.render();
  }

  historyPanel(id: string): void {
    this.panelBlock = id;
    this.state.activePanel = "history";
    this.render();
  }

  drop(dragged: string, target: string): void {
    this.enqueue(async () => {
      const position = this.localNode(target).children.length;
      const reply = await this.api.moveBlock(
        this.sessionId, dragged, target, position);
      this.tree.tree_version = reply.tree_version;
      await this.hydrate();  // depths of a whole subtree changed
    });
  }

  selectPhrase(id: string, start: number, end: number): void {
    this.enqueue(async () => {
      const reply = await this.api.getLinks(this.sessionId, id, start, end);
      this.links = reply.links;
      this.render();
    });
  }

  // -- panel + code gestures ------------------------------------------------------

  submitSupplement(block: string, text: string): void {
    this.enqueue(async () => {
      const reply = await this.api.addSupplement(this.sessionId, block, text);
      this.localNode(block).badge_count = reply.badge_count ?? 0;
      this.tree.tree_version = reply.tree_version;
      this.render();
    });
  }

  slideTo(block: string, a: number, b: number): void {
    this.enqueue(async () => {
      this.diff = await this.api.getDiff(this.sessionId, block, a, b);
      this.render();
    });
  }

  runBlock(block: string): void {
    this.enqueue(async () => {
      const { job_id } = await this.api.runBlock(this.sessionId, block);
      const job = await this.awaitJob(job_id);
      this.runResult = (job.result ?? null) as RunResultReply | null;
      this.render();
    });
  }

  listSteps(id: string): void {
    this.enqueue(async () => {
      const { job_id } = await this.api.listSteps(this.sessionId, id);
      await this.awaitJob(job_id);
      await this.refreshAfterJob();
    });
  }

  editLine(lineNumber: number, text: string): void {
    this.enqueue(async () => {
      await this.api.codeEdit(this.sessionId, lineNumber, lineNumber, text);
      this.doc = await this.api.getDocument(this.sessionId);
      if (this.state.selected) {
        this.state.slice = null;  // ranges shifted; cleared until next select
      }
      this.render();
    });
  }

  // -- job plumbing ------------------------------------------------------------

  private async awaitJob(jobId: string) {
    this.state.pendingJobs.push(jobId);
    try {
      for (;;) {
        const job = await this.api.getJob(this.sessionId, jobId);
        if (job.status !== "running") {
          if (job.status === "failed" && job.error) {
            this.toast = `${job.error.code}: ${job.error.message}`;
          }
          return job;
        }
        await new Promise((resolve) => setTimeout(resolve, JOB_POLL_MS));
      }
    } finally {
      this.state.pendingJobs = this.state.pendingJobs.filter((j) => j !== jobId);
    }
  }

  private async refreshAfterJob(): Promise<void> {
    this.tree = await this.api.getTree(this.sessionId);
    this.doc = await this.api.getDocument(this.sessionId);
    this.state.reconcile(this.tree);
    this.render();
  }

  // -- rendering ---------------------------------------------------------------

  render(): void {
    const selected = this.state.selected;
    const node = selected
      ? this.tree.nodes.find((n) => n.id === selected)
      : undefined;
    const spans = node
      ? this.spanCache.get(`${node.id}:${node.prompt}`)
      : undefined;
    renderTreePane(this.panes["tree-pane"], this.tree, this.state, spans, this);
    renderCodePane(this.panes["code-pane"], this.doc, this.state.slice,
                   this.links, this);
    renderSupplementPanel(
      this.panes["supplement-panel"], this.tree,
      this.state.activePanel === "supplement" ? this.panelBlock : null, this);
    renderHistoryPanel(
      this.panes["history-panel"], this.tree,
      this.state.activePanel === "history" ? this.panelBlock : null,
      this.diff, this);
    renderResultsPanel(this.panes["results-panel"], this.runResult);
    this.panes["toast"].textContent = this.toast ?? "";
  }
}

export async function startApp(
  base: string, sessionId: string, root: HTMLElement,
  fetcher: typeof fetch = fetch,
): Promise<App> {
  const api = new ApiClient(base, fetcher);
  const app = new App(api, sessionId, root);
  await app.hydrate();
  return app;
}
