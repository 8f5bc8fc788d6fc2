import {
  CellJson,
  EventJson,
  InstanceJson,
  NotificationJson,
  RpcError,
  Selection,
  Snapshot,
  ToolJson,
} from "./protocol.js";
import { Transport } from "./transport.js";
import { PlotLiteWidget } from "./widgets/plotlite.js";
import { SliderWidget } from "./widgets/slider.js";
import { TableWidget } from "./widgets/table.js";
import { h, Widget, WidgetHost } from "./widgets/widget.js";

function cellText(cell: CellJson): string {
  return cell.lines.map((ln) => ln.text).join("\n");
}

/** Fallback for views this UI has no dedicated widget for. */
class SnapshotWidget implements Widget {
  readonly el = h("div", "widget snapshot-widget");
  setSnapshot(snap: Snapshot): void {
    this.el.textContent = `${snap.type} · ${snap.hash.slice(0, 12)}`;
  }
  applyBindings(): void {}
}

class CellView {
  readonly el: HTMLElement;
  readonly textarea: HTMLTextAreaElement;
  private gutter: HTMLElement;
  private errorBox: HTMLElement;
  readonly widgetMount: HTMLElement;
  private serverText = "";

  constructor(
    readonly cellId: string,
    commit: (text: string) => void,
  ) {
    this.el = h("div", "cell");
    this.el.dataset.cell = cellId;
    const code = h("div", "code");
    this.gutter = h("div", "gutter");
    this.textarea = document.createElement("textarea");
    this.textarea.spellcheck = false;
    code.append(this.gutter, this.textarea);
    this.errorBox = h("div", "cell-error");
    this.widgetMount = h("div", "widget-mount"); // widget output renders below the code
    this.el.append(code, this.errorBox, this.widgetMount);

    const maybeCommit = () => {
      if (this.textarea.value !== this.serverText) commit(this.textarea.value);
    };
    this.textarea.addEventListener("blur", maybeCommit);
    this.textarea.addEventListener("keydown", (ev) => {
      if (ev.key === "Enter" && (ev.ctrlKey || ev.metaKey)) maybeCommit();
    });
  }

  update(cell: CellJson): void {
    this.serverText = cellText(cell);
    this.textarea.value = this.serverText; // full replacement, never merged
    this.textarea.rows = Math.max(1, cell.lines.length);
    this.gutter.textContent = "";
    for (const ln of cell.lines) {
      const mark = ln.prov.kind === "frozen" ? "🔒" : ln.prov.kind === "generated" ? "⚙" : "";
      this.gutter.append(h("div", `mark mark-${ln.prov.kind}`, mark));
    }
  }

  /** Throw away a rejected local edit and show the server's text again. */
  revert(): void {
    this.textarea.value = this.serverText;
  }

  setError(message: string | null): void {
    this.errorBox.textContent = message ?? "";
    this.errorBox.classList.toggle("visible", message !== null);
  }
}

export class NotebookApp {
  readonly cellList: HTMLElement;
  private dragBin: HTMLElement;
  private toast: HTMLElement;
  private tools = new Map<string, ToolJson>();
  private views = new Map<string, CellView>();
  private widgets = new Map<string, Widget>();
  private instances = new Map<string, InstanceJson>();
  private inFlight: Promise<unknown> | null = null;

  constructor(
    readonly root: HTMLElement,
    private transport: Transport,
  ) {
    root.classList.add("notebook");
    this.cellList = h("div", "cells");
    this.dragBin = h("div", "drag-bin");
    this.toast = h("div", "toast");
    root.append(this.cellList, this.dragBin, this.toast);
    transport.onEvent((ev) => this.applyEvent(ev));
    document.addEventListener("mouseup", () => this.hideDragBin());
  }

  get busy(): boolean {
    return this.inFlight !== null;
  }

  /** Resolves once no mutation is in flight (events already applied). */
  async whenIdle(): Promise<void> {
    while (this.inFlight) await this.inFlight;
  }

  async connect(): Promise<void> {
    await this.transport.call("subscribe");
    const tools = await this.transport.call("list_tools");
    for (const t of tools.tools as ToolJson[]) this.tools.set(t.name, t);
    const opened = await this.transport.call("open_notebook");
    for (const cell of opened.notebook.cells as CellJson[]) this.addCellView(cell);
    for (const inst of opened.instances as InstanceJson[]) {
      this.mountWidget(inst);
      if (inst.displayed) {
        // a freshly joined client has no notification history to replay
        const got = await this.transport.call("get_variable", { name: inst.displayed });
        this.widgets.get(inst.id)?.setSnapshot(got.snapshot);
      }
    }
  }

  // -- mutations (one in flight at a time; inputs disabled meanwhile) --------

  private mutate<T>(fn: () => Promise<T>): Promise<T | undefined> {
    if (this.inFlight) return Promise.resolve(undefined);
    const op = fn();
    this.inFlight = op.catch(() => {});
    this.setDisabled(true);
    const release = () => {
      this.inFlight = null;
      this.setDisabled(false);
    };
    return op.finally(release);
  }

  private setDisabled(disabled: boolean) {
    this.root.classList.toggle("busy", disabled);
    for (const el of this.root.querySelectorAll<HTMLElement>("button, input, select, textarea")) {
      (el as HTMLButtonElement).disabled = disabled;
    }
  }

  addCell(text: string): Promise<CellJson | undefined> {
    return this.mutate(async () => (await this.transport.call("add_cell", { text })).cell);
  }

  invoke(cellId: string): Promise<InstanceJson | undefined> {
    return this.mutate(async () => {
      try {
        const result = await this.transport.call("invoke", { cell: cellId });
        this.views.get(cellId)?.setError(null);
        return result.instance;
      } catch (err) {
        this.surface(cellId, err);
        return undefined;
      }
    });
  }

  widgetAction(instanceId: string, action: string, data: Record<string, string>): Promise<unknown> {
    const cellId = this.instances.get(instanceId)?.cell;
    return this.mutate(async () => {
      try {
        await this.transport.call("handoff", { instance: instanceId, action, data });
        if (cellId) this.views.get(cellId)?.setError(null);
      } catch (err) {
        this.surface(cellId, err);
      }
    });
  }

  commitEdit(cellId: string, text: string): Promise<unknown> {
    return this.mutate(async () => {
      const view = this.views.get(cellId);
      try {
        const result = await this.transport.call("edit_cell", { cell: cellId, text });
        view?.setError(result.execution && !result.execution.ok ? result.execution.error : null);
      } catch (err) {
        view?.revert(); // e.g. an edited invocation line is rejected wholesale
        this.surface(cellId, err);
      }
    });
  }

  transfer(instanceId: string, selection: Selection, target: string): Promise<unknown> {
    return this.mutate(async () => {
      try {
        const result = await this.transport.call("transfer_selection", {
          instance: instanceId,
          selection,
          target,
        });
        const view = this.views.get(result.cell.id);
        if (view && typeof view.el.scrollIntoView === "function") view.el.scrollIntoView();
      } catch (err) {
        this.surface(this.instances.get(instanceId)?.cell, err);
      }
    });
  }

  private surface(cellId: string | undefined, err: unknown) {
    if (!(err instanceof RpcError)) throw err;
    const message = err.detail.tool_message ?? err.detail.message;
    if (cellId && this.views.has(cellId)) this.views.get(cellId)!.setError(message);
    else this.showToast(message);
  }

  private showToast(message: string) {
    this.toast.textContent = message;
    this.toast.classList.add("visible");
    setTimeout(() => this.toast.classList.remove("visible"), 4000);
  }

  // -- server events ----------------------------------------------------------

  private applyEvent(ev: EventJson) {
    switch (ev.event) {
      case "cell-added":
        this.addCellView(ev.cell as CellJson, ev.index as number);
        break;
      case "cell-changed":
        this.views.get((ev.cell as CellJson).id)?.update(ev.cell as CellJson);
        break;
      case "instance-created":
        this.mountWidget(ev.instance as InstanceJson);
        break;
      case "tool-notify":
        this.routeNotification(ev as unknown as NotificationJson);
        break;
    }
  }

  private routeNotification(note: NotificationJson) {
    const widget = this.widgets.get(note.instance);
    if (!widget) return;
    if (note.payload.kind === "data-refresh") widget.setSnapshot(note.payload.snapshot);
    else if (note.payload.kind === "binding-update") widget.applyBindings(note.payload.bindings);
    // action-removed needs no visual beyond the cell-changed that precedes it
  }

  private addCellView(cell: CellJson, index?: number) {
    if (this.views.has(cell.id)) {
      this.views.get(cell.id)!.update(cell);
      return;
    }
    const view = new CellView(cell.id, (text) => void this.commitEdit(cell.id, text));
    view.update(cell);
    this.views.set(cell.id, view);
    const at = index ?? this.cellList.children.length;
    this.cellList.insertBefore(view.el, this.cellList.children[at] ?? null);
  }

  private mountWidget(inst: InstanceJson) {
    const view = this.views.get(inst.cell);
    if (!view || this.widgets.has(inst.id)) return;
    this.instances.set(inst.id, inst);
    const app = this;
    const host: WidgetHost = {
      send: (action, data) => void this.widgetAction(inst.id, action, data),
      beginDrag: (selection) => this.showDragBin(inst, selection),
      get busy() {
        return app.busy;
      },
    };
    const widget =
      inst.view === "table"
        ? new TableWidget(host)
        : inst.view === "plotlite"
          ? new PlotLiteWidget(host)
          : inst.view === "slider"
            ? new SliderWidget(host)
            : new SnapshotWidget();
    this.widgets.set(inst.id, widget);
    view.widgetMount.textContent = "";
    view.widgetMount.append(widget.el);
  }

  // -- drag bin ----------------------------------------------------------------

  private showDragBin(inst: InstanceJson, selection: Selection) {
    const targets = this.tools.get(inst.tool)?.selection_targets ?? [];
    if (!targets.length) return;
    this.dragBin.textContent = "";
    for (const target of targets) {
      const entry = h("div", "bin-entry", target.label);
      entry.addEventListener("mouseup", (ev) => {
        ev.stopPropagation();
        this.hideDragBin();
        void this.transfer(inst.id, selection, target.label);
      });
      this.dragBin.append(entry);
    }
    this.dragBin.classList.add("visible"); // shown only while the drag lasts
  }

  private hideDragBin() {
    this.dragBin.classList.remove("visible");
  }
}
