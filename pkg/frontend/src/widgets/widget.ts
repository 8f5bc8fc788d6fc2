import { Selection, Snapshot } from "../protocol.js";

/** What a widget can do to the world, handed in by the app shell. */
export interface WidgetHost {
  /** Send a GUI action as a handoff; the app serializes and tracks it. */
  send(action: string, data: Record<string, string>): void;
  /** Start a drag gesture carrying a selection; the app shows the drag bin. */
  beginDrag(selection: Selection): void;
  readonly busy: boolean;
}

export interface Widget {
  readonly el: HTMLElement;
  setSnapshot(snap: Snapshot): void;
  applyBindings(bindings: Record<string, string>): void;
}

export function h<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const el = document.createElement(tag);
  if (className) el.className = className;
  if (text !== undefined) el.textContent = text;
  return el;
}

export function option(value: string, label = value): HTMLOptionElement {
  const el = document.createElement("option");
  el.value = value;
  el.textContent = label;
  return el;
}

/** True when every present cell of the column is a number. */
export function numericColumn(rows: unknown[][], idx: number): boolean {
  return rows.length > 0 && rows.every((r) => typeof r[idx] === "number");
}

/** Spell a filter operand the way the generated code wants it. */
export function literal(raw: string, numeric: boolean): string {
  return numeric ? String(Number(raw)) : JSON.stringify(raw);
}
