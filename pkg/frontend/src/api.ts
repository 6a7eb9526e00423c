/** Typed API client. Every call appends one interaction-log entry, tagged
 * with whether a user gesture or the job/refresh machinery initiated it. */

import type {
  DiffReply,
  DocumentView,
  JobReply,
  Link,
  MutationReply,
  SliceView,
  Span,
  TreeView,
} from "./types.js";

export type CallOrigin = "gesture" | "system";

export interface LogEntry {
  method: string;
  path: string;
  origin: CallOrigin;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  readonly log: LogEntry[] = [];

  constructor(
    private readonly base: string,
    private readonly fetcher: typeof fetch = fetch,
  ) {}

  private async request<T>(
    origin: CallOrigin,
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    this.log.push({ method, path, origin });
    const reply = await this.fetcher(`${this.base}${path}`, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await reply.json();
    if (!reply.ok) {
      throw new ApiError(
        reply.status,
        (payload as { code?: string }).code ?? "error",
        (payload as { message?: string }).message ?? reply.statusText,
      );
    }
    return payload as T;
  }

  createSession(sessionId: string): Promise<MutationReply> {
    return this.request("system", "POST", "/sessions", { session_id: sessionId });
  }

  getTree(sid: string, origin: CallOrigin = "system"): Promise<TreeView> {
    return this.request(origin, "GET", `/sessions/${sid}/tree`);
  }

  getDocument(sid: string, origin: CallOrigin = "system"): Promise<DocumentView> {
    return this.request(origin, "GET", `/sessions/${sid}/document`);
  }

  getSlice(sid: string, selected: string): Promise<SliceView> {
    return this.request(
      "gesture", "GET", `/sessions/${sid}/document/slice?selected=${selected}`);
  }

  addBlock(
    sid: string, anchor: string, relation: "sibling" | "child", prompt: string,
    expectedVersion?: number,
  ): Promise<MutationReply> {
    return this.request("gesture", "POST", `/sessions/${sid}/blocks`, {
      anchor, relation, prompt, expected_version: expectedVersion,
    });
  }

  editPrompt(
    sid: string, block: string, prompt: string, expectedVersion?: number,
  ): Promise<MutationReply> {
    return this.request("gesture", "PATCH", `/sessions/${sid}/blocks/${block}`, {
      prompt, expected_version: expectedVersion,
    });
  }

  deleteBlock(sid: string, block: string): Promise<MutationReply> {
    return this.request("gesture", "DELETE", `/sessions/${sid}/blocks/${block}`);
  }

  duplicateBlock(sid: string, block: string): Promise<MutationReply> {
    return this.request(
      "gesture", "POST", `/sessions/${sid}/blocks/${block}/duplicate`, {});
  }

  moveBlock(
    sid: string, block: string, newParent: string, position: number,
  ): Promise<MutationReply> {
    return this.request("gesture", "POST", `/sessions/${sid}/blocks/${block}/move`, {
      new_parent: newParent, position,
    });
  }

  addSupplement(sid: string, block: string, text: string): Promise<MutationReply> {
    return this.request(
      "gesture", "POST", `/sessions/${sid}/blocks/${block}/supplements`, { text });
  }

  setFolded(sid: string, block: string, folded: boolean): Promise<MutationReply> {
    return this.request(
      "gesture", "POST", `/sessions/${sid}/blocks/${block}/fold`, { folded });
  }

  getSpans(sid: string, block: string): Promise<{ spans: Span[] }> {
    return this.request("system", "GET", `/sessions/${sid}/blocks/${block}/spans`);
  }

  getLinks(
    sid: string, block: string, start: number, end: number,
  ): Promise<{ links: Link[] }> {
    return this.request(
      "gesture", "POST", `/sessions/${sid}/blocks/${block}/links`, { start, end });
  }

  getRevisions(
    sid: string, block: string,
  ): Promise<{ revisions: Array<{ seq: number; op_kind: string }> }> {
    return this.request(
      "system", "GET", `/sessions/${sid}/blocks/${block}/revisions`);
  }

  getDiff(sid: string, block: string, a: number, b: number): Promise<DiffReply> {
    return this.request(
      "gesture", "GET", `/sessions/${sid}/blocks/${block}/diff?a=${a}&b=${b}`);
  }

  generate(sid: string, block: string): Promise<{ job_id: string }> {
    return this.request(
      "gesture", "POST", `/sessions/${sid}/blocks/${block}/generate`, {});
  }

  propagate(sid: string, receipt: unknown): Promise<{ job_id: string }> {
    return this.request(
      "gesture", "POST", `/sessions/${sid}/propagate`, { receipt });
  }

  listSteps(sid: string, block: string): Promise<{ job_id: string }> {
    return this.request(
      "gesture", "POST", `/sessions/${sid}/blocks/${block}/list_steps`);
  }

  runBlock(sid: string, block: string): Promise<{ job_id: string }> {
    return this.request("gesture", "POST", `/sessions/${sid}/blocks/${block}/run`);
  }

  codeEdit(
    sid: string, firstLine: number, lastLine: number, text: string,
  ): Promise<MutationReply> {
    return this.request("gesture", "POST", `/sessions/${sid}/document/edit`, {
      first_line: firstLine, last_line: lastLine, text,
    });
  }

  getJob(sid: string, jobId: string): Promise<JobReply> {
    return this.request("system", "GET", `/sessions/${sid}/jobs/${jobId}`);
  }

  gestures(): LogEntry[] {
    return this.log.filter((e) => e.origin === "gesture");
  }
}
