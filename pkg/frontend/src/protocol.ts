// Wire shapes of the notebook server's JSON protocol.

export type ProvJson =
  | { kind: "generated"; tool: string; seq: number; template: string }
  | { kind: "frozen" }
  | { kind: "user" };

export type LineJson = { text: string; prov: ProvJson };

export type CellJson = { id: string; lines: LineJson[] };

export type Snapshot = {
  type: string;
  hash: string;
  // table -> {columns, rows}; grid -> number[][]; num/str/bool -> primitive
  value: any;
};

export type InstanceJson = {
  id: string;
  tool: string;
  cell: string;
  view: string;
  displayed: string | null;
};

export type SelectionTargetJson = { label: string; tool: string | null };

export type ToolJson = {
  name: string;
  view: string;
  params: { name: string; accepted: string[] }[];
  actions: string[];
  selection_targets: SelectionTargetJson[];
};

export type NotificationPayload =
  | { kind: "data-refresh"; snapshot: Snapshot }
  | { kind: "binding-update"; seq: number; bindings: Record<string, string> }
  | { kind: "action-removed"; seq: number };

export type NotificationJson = { instance: string; payload: NotificationPayload };

export type EventJson = { event: string; [key: string]: any };

export type ErrorJson = { code: string; message: string; tool_message?: string };

/** A request the server answered with ok=false. */
export class RpcError extends Error {
  constructor(readonly detail: ErrorJson) {
    super(detail.message);
    this.name = "RpcError";
  }
}

export type SelectionPredicate = {
  col: string;
  op: string;
  value?: unknown;
  values?: unknown[];
};

export type Selection = { predicates: SelectionPredicate[] };
