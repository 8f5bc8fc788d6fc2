import { Snapshot } from "../protocol.js";
import { h, numericColumn, option, Widget, WidgetHost } from "./widget.js";

const COUNT = "(count)";
const NONE = "(none)";

function hue(s: string): number {
  let acc = 0;
  for (const ch of s) acc = (acc * 31 + ch.charCodeAt(0)) % 360;
  return acc;
}

/**
 * One mark type: vertical bars over a categorical x column, height by count
 * or by the sum of a numeric column.  Clicking bars toggles them into the
 * current selection; dragging a selected bar opens the app's drag bin.
 */
export class PlotLiteWidget implements Widget {
  readonly el: HTMLElement;
  private columns: string[] = [];
  private rows: unknown[][] = [];
  private x = "";
  private y = COUNT;
  private color = NONE;
  private selected = new Set<string>();
  private dragStarted = false;
  private chart: HTMLElement;

  constructor(private host: WidgetHost) {
    this.el = h("div", "widget plot-widget");
    this.chart = h("div", "chart");
  }

  setSnapshot(snap: Snapshot): void {
    if (snap.type !== "table") return;
    this.columns = snap.value.columns as string[];
    this.rows = snap.value.rows as unknown[][];
    const categorical = this.columns.filter((_, i) => !numericColumn(this.rows, i));
    if (!categorical.includes(this.x)) this.x = categorical[0] ?? "";
    this.render();
  }

  applyBindings(_bindings: Record<string, string>): void {}

  private categorical(): string[] {
    return this.columns.filter((_, i) => !numericColumn(this.rows, i));
  }

  private numeric(): string[] {
    return this.columns.filter((_, i) => numericColumn(this.rows, i));
  }

  private render() {
    this.el.textContent = "";
    this.el.append(this.pickers(), this.chart);
    this.renderBars();
  }

  private pickers(): HTMLElement {
    const bar = h("div", "bar pickers");
    const mk = (cls: string, values: string[], current: string, set: (v: string) => void) => {
      const sel = h("select", cls);
      for (const v of values) sel.append(option(v));
      sel.value = current;
      sel.addEventListener("change", () => {
        set(sel.value);
        this.selected.clear();
        this.renderBars();
      });
      return sel;
    };
    bar.append(
      mk("pick-x", this.categorical(), this.x, (v) => (this.x = v)),
      mk("pick-y", [COUNT, ...this.numeric()], this.y, (v) => (this.y = v)),
      mk("pick-color", [NONE, ...this.columns], this.color, (v) => (this.color = v)),
    );
    return bar;
  }

  private buckets(): Map<string, { size: number; colorVotes: Map<string, number> }> {
    const xi = this.columns.indexOf(this.x);
    const yi = this.columns.indexOf(this.y);
    const ci = this.columns.indexOf(this.color);
    const out = new Map<string, { size: number; colorVotes: Map<string, number> }>();
    for (const row of this.rows) {
      const key = String(row[xi]);
      let bucket = out.get(key);
      if (!bucket) out.set(key, (bucket = { size: 0, colorVotes: new Map() }));
      bucket.size += this.y === COUNT ? 1 : Number(row[yi]) || 0;
      if (ci >= 0) {
        const v = String(row[ci]);
        bucket.colorVotes.set(v, (bucket.colorVotes.get(v) ?? 0) + 1);
      }
    }
    return out;
  }

  private renderBars() {
    this.chart.textContent = "";
    if (!this.x) return;
    const buckets = this.buckets();
    const peak = Math.max(1, ...[...buckets.values()].map((b) => b.size));
    for (const [key, bucket] of buckets) {
      const wrap = h("div", "bar-slot");
      const bar = h("div", "plot-bar");
      bar.dataset.value = key;
      bar.style.height = `${Math.round((100 * bucket.size) / peak)}%`;
      if (this.selected.has(key)) bar.classList.add("selected");
      if (this.color !== NONE && bucket.colorVotes.size) {
        const top = [...bucket.colorVotes.entries()].sort((a, b) => b[1] - a[1])[0]![0];
        bar.style.backgroundColor = `hsl(${hue(top)} 70% 55%)`;
      }

      bar.addEventListener("mousedown", () => {
        if (this.selected.has(key) && this.selected.size > 0) {
          this.dragStarted = true;
          this.host.beginDrag({
            predicates: [{ col: this.x, op: "in", values: [...this.selected] }],
          });
        }
      });
      bar.addEventListener("click", () => {
        if (this.dragStarted) {
          this.dragStarted = false; // the click that ends a drag is not a toggle
          return;
        }
        if (this.selected.has(key)) this.selected.delete(key);
        else this.selected.add(key);
        this.renderBars();
      });

      wrap.append(bar, h("span", "bar-label", key));
      this.chart.append(wrap);
    }
  }
}
