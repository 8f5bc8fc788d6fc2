import { Snapshot } from "../protocol.js";
import { h, literal, numericColumn, option, Widget, WidgetHost } from "./widget.js";

const MAX_ROWS = 200;
const OPS = ["<", "<=", ">", ">=", "==", "!="];

/**
 * Interactive data grid: filter bar, sortable/droppable column headers,
 * drag-a-header-onto-another column moves, and an insert-column form.  Every
 * control emits the corresponding action; the table itself re-renders only
 * when the refreshed snapshot comes back.
 */
export class TableWidget implements Widget {
  readonly el: HTMLElement;
  private columns: string[] = [];
  private rows: unknown[][] = [];
  private filterCol = "";
  private filterOp = "<";
  private dragFrom: string | null = null;

  constructor(private host: WidgetHost) {
    this.el = h("div", "widget table-widget");
  }

  setSnapshot(snap: Snapshot): void {
    if (snap.type !== "table") return;
    this.columns = snap.value.columns as string[];
    this.rows = snap.value.rows as unknown[][];
    if (!this.columns.includes(this.filterCol)) this.filterCol = this.columns[0] ?? "";
    this.render();
  }

  applyBindings(_bindings: Record<string, string>): void {
    // the table's visible state is its data; refreshes carry everything
  }

  private send(action: string, data: Record<string, string>) {
    if (!this.host.busy) this.host.send(action, data);
  }

  private render() {
    this.el.textContent = "";
    this.el.append(this.filterBar(), this.insertBar(), this.grid());
  }

  private filterBar(): HTMLElement {
    const bar = h("div", "bar filter-bar");
    const col = h("select", "flt-col");
    for (const c of this.columns) col.append(option(c));
    col.value = this.filterCol;
    col.addEventListener("change", () => (this.filterCol = col.value));

    const op = h("select", "flt-op");
    for (const o of OPS) op.append(option(o));
    op.value = this.filterOp;
    op.addEventListener("change", () => (this.filterOp = op.value));

    const val = h("input", "flt-val");
    val.placeholder = "value";

    const apply = h("button", "flt-apply", "Filter");
    apply.addEventListener("click", () => {
      if (!col.value || val.value === "") return;
      const numeric = numericColumn(this.rows, this.columns.indexOf(col.value));
      this.send("filter", {
        COL: col.value,
        EXPR: `${op.value} ${literal(val.value, numeric)}`,
      });
    });

    bar.append(col, op, val, apply);
    return bar;
  }

  private insertBar(): HTMLElement {
    const bar = h("div", "bar insert-bar");
    const name = h("input", "ins-name");
    name.placeholder = "new column";
    const idx = h("input", "ins-idx");
    idx.type = "number";
    idx.value = "0";
    const fill = h("input", "ins-fill");
    fill.type = "number";
    fill.value = "0";
    const apply = h("button", "ins-apply", "Insert");
    apply.addEventListener("click", () => {
      if (!name.value) return;
      this.send("insert-column", {
        IDX: idx.value || "0",
        NAME: JSON.stringify(name.value),
        FILL: fill.value || "0",
      });
    });
    bar.append(name, idx, fill, apply);
    return bar;
  }

  private grid(): HTMLElement {
    const table = h("table", "grid");
    const head = h("tr");
    for (const name of this.columns) head.append(this.header(name));
    table.append(head);

    for (const row of this.rows.slice(0, MAX_ROWS)) {
      const tr = h("tr");
      for (const cell of row) tr.append(h("td", undefined, String(cell)));
      table.append(tr);
    }
    if (this.rows.length > MAX_ROWS) {
      table.append(h("caption", "truncated", `showing ${MAX_ROWS} of ${this.rows.length} rows`));
    }
    return table;
  }

  private header(name: string): HTMLElement {
    const th = h("th");
    th.dataset.col = name;
    const label = h("span", "col-name", name);

    // drag a header onto another header to move the column there
    label.addEventListener("mousedown", () => (this.dragFrom = name));
    th.addEventListener("mouseup", () => {
      const from = this.dragFrom;
      this.dragFrom = null;
      if (!from || from === name) return;
      const rest = this.columns.filter((c) => c !== from);
      this.send("move-column", { NAME: JSON.stringify(from), IDX: String(rest.indexOf(name)) });
    });

    const sort = h("button", "col-sort", "⇅");
    sort.title = `sort by ${name}`;
    sort.addEventListener("click", () => this.send("sort-column", { COL: JSON.stringify(name) }));

    const drop = h("button", "col-drop", "✕");
    drop.title = `drop ${name}`;
    drop.addEventListener("click", () => this.send("drop-column", { NAME: JSON.stringify(name) }));

    th.append(label, sort, drop);
    return th;
  }
}
