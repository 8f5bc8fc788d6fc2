import { Snapshot } from "../protocol.js";
import { Widget, WidgetHost } from "./widget.js";

/** A numeric variable as a draggable thumb; releasing it rewrites the code. */
export class SliderWidget implements Widget {
  readonly el: HTMLElement;
  private input: HTMLInputElement;
  private readout: HTMLElement;

  constructor(private host: WidgetHost) {
    this.el = document.createElement("div");
    this.el.className = "widget slider-widget";
    this.input = document.createElement("input");
    this.input.type = "range";
    this.input.min = "0";
    this.input.max = "100";
    this.input.step = "any";
    this.readout = document.createElement("span");
    this.readout.className = "slider-readout";
    this.el.append(this.input, this.readout);

    this.input.addEventListener("input", () => this.show(this.input.value));
    this.input.addEventListener("change", () => {
      if (!this.host.busy) this.host.send("slider-set", { VAL: this.input.value });
    });
  }

  private show(value: string) {
    this.readout.textContent = value;
  }

  private fit(value: number) {
    // keep the thumb comfortably inside the track
    const span = Math.max(100, Math.abs(value) * 2);
    this.input.min = String(value < 0 ? -span : 0);
    this.input.max = String(span);
  }

  setSnapshot(snap: Snapshot): void {
    if (snap.type !== "num") return;
    const value = Number(snap.value);
    this.fit(value);
    this.input.value = String(snap.value);
    this.show(String(snap.value));
  }

  applyBindings(bindings: Record<string, string>): void {
    const val = bindings["VAL"];
    if (val === undefined) return;
    this.fit(Number(val));
    this.input.value = val;
    this.show(val);
  }
}
