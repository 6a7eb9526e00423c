/** Wire types mirrored from the service API. */

export interface TreeNode {
  id: string;
  parent: string | null;
  children: string[];
  prompt: string;
  folded: boolean;
  badge_count: number;
  depth: number;
  has_code: boolean;
  revision_count: number;
}

export interface TreeView {
  session_id: string;
  nodes: TreeNode[];
  tree_version: number;
  doc_version: number;
}

export interface DocumentView {
  text: string;
  index: Record<string, [number, number]>;
  tree_version: number;
  doc_version: number;
}

export interface FoldedRange {
  block: string;
  first_line: number;
  last_line: number;
  placeholder: string;
}

export interface SliceView {
  selected: string;
  path: string[];
  folded: FoldedRange[];
  text: string;
  tree_version: number;
  doc_version: number;
}

export interface Span {
  start: number;
  end: number;
  kind: "NL" | "CODE";
}

export interface LinkTarget {
  kind: "code" | "phrase";
  line?: number;
  start_col?: number;
  end_col?: number;
  token?: string;
  block?: string;
  start?: number;
  end?: number;
}

export interface Link {
  target: LinkTarget;
  entity_type: "variable" | "function" | "data-entity" | "action";
  score: number;
}

export interface Receipt {
  kind: string;
  [key: string]: unknown;
}

export interface MutationReply {
  tree_version: number;
  doc_version: number;
  id?: string;
  receipt?: Receipt;
  badge_count?: number;
  block?: string;
}

export interface DiffHunk {
  tag: string;
  a_lines: string[];
  b_lines: string[];
}

export interface DiffReply {
  prompt_hunks: DiffHunk[];
  code_hunks: DiffHunk[];
}

export interface RevisionRow {
  seq: number;
  op_kind: string;
}

export interface JobReply {
  id: string;
  kind: string;
  status: "running" | "done" | "failed";
  events: Array<Record<string, unknown>>;
  result: Record<string, unknown> | null;
  error: { code: string; message: string } | null;
}

export interface RunResultReply {
  exit_status: number;
  stdout: string;
  stderr: string;
  artifacts: string[];
  artifact_data: Record<string, string>;
}
