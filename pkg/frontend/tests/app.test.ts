import { afterEach, beforeEach, expect, it } from "vitest";
import { NotebookApp } from "../src/app.js";
import { TcpTransport } from "./tcpTransport.js";
import { RunningServer, startServer } from "./server.js";

let server: RunningServer;
let transport: TcpTransport;
let root: HTMLElement;
let app: NotebookApp;

beforeEach(async () => {
  server = await startServer();
  transport = await TcpTransport.connect(server.port);
  root = document.createElement("div");
  document.body.append(root);
  app = new NotebookApp(root, transport);
  await app.connect();
});

afterEach(() => {
  transport.close();
  server.stop();
  root.remove();
});

function pane(cellId: string): HTMLTextAreaElement {
  return root.querySelector(`[data-cell="${cellId}"] textarea`) as HTMLTextAreaElement;
}

it("a filter click lands in the code pane as one generated line, fast", async () => {
  await app.addCell("df = census()");
  const cell = (await app.addCell("%%mage table df"))!;
  await app.invoke(cell.id);

  const widget = root.querySelector(".table-widget")!;
  expect(widget.querySelectorAll("table.grid tr").length).toBe(15); // header + 14 rows

  (widget.querySelector(".flt-col") as HTMLSelectElement).value = "age";
  (widget.querySelector(".flt-op") as HTMLSelectElement).value = "<";
  (widget.querySelector(".flt-val") as HTMLInputElement).value = "65";
  const t0 = performance.now();
  (widget.querySelector(".flt-apply") as HTMLButtonElement).click();
  await app.whenIdle();
  const elapsed = performance.now() - t0;

  expect(pane(cell.id).value.split("\n")).toContain("df = df[df.age < 65]");
  expect(elapsed).toBeLessThan(500);
  // the grid re-rendered from the pushed refresh, and the new line is marked
  expect(widget.querySelectorAll("table.grid tr").length).toBe(13);
  expect(root.querySelector(`[data-cell="${cell.id}"] .mark-generated`)).not.toBeNull();
});

it("the slider and its constant in the code pane track each other", async () => {
  await app.addCell("n = 50");
  const cell = (await app.addCell("%%mage slider n"))!;
  await app.invoke(cell.id);

  const thumb = root.querySelector(".slider-widget input") as HTMLInputElement;
  expect(thumb.value).toBe("50");

  // widget -> code: releasing the thumb writes an assignment
  thumb.value = "80";
  thumb.dispatchEvent(new Event("change"));
  await app.whenIdle();
  expect(pane(cell.id).value.split("\n")).toContain("n = 80");

  // code -> widget: retyping the constant moves the thumb
  pane(cell.id).value = pane(cell.id).value.replace("n = 80", "n = 25");
  pane(cell.id).dispatchEvent(new FocusEvent("blur"));
  await app.whenIdle();
  expect(thumb.value).toBe("25");
  expect(pane(cell.id).value.split("\n")).toContain("n = 25");
});

it("dragging a plot selection onto 'Show in table' spawns a live table cell", async () => {
  await app.addCell("df = census()");
  const plotCell = (await app.addCell("%%mage plotlite df"))!;
  await app.invoke(plotCell.id);

  const plot = root.querySelector(".plot-widget")!;
  const bar = () =>
    [...plot.querySelectorAll<HTMLElement>(".plot-bar")].find(
      (b) => b.dataset.value === "Bachelors",
    )!;
  expect(bar()).toBeDefined();

  bar().click(); // toggle into the selection (re-renders the chart)
  expect(bar().classList.contains("selected")).toBe(true);

  const bin = root.querySelector(".drag-bin")!;
  expect(bin.classList.contains("visible")).toBe(false);

  // the bin exists only for the duration of a drag gesture
  bar().dispatchEvent(new MouseEvent("mousedown"));
  expect(bin.classList.contains("visible")).toBe(true);
  document.dispatchEvent(new MouseEvent("mouseup")); // abandon the drag
  expect(bin.classList.contains("visible")).toBe(false);

  bar().dispatchEvent(new MouseEvent("mousedown"));
  const entry = [...bin.querySelectorAll<HTMLElement>(".bin-entry")].find(
    (e) => e.textContent === "Show in table",
  )!;
  entry.dispatchEvent(new MouseEvent("mouseup"));
  await app.whenIdle();

  expect(bin.classList.contains("visible")).toBe(false);
  const cells = [...root.querySelectorAll<HTMLElement>(".cell")];
  expect(cells.length).toBe(3);
  const text = (cells[2]!.querySelector("textarea") as HTMLTextAreaElement).value;
  expect(text).toBe('%%mage table sel_1\nsel_1 = df[df.education in ["Bachelors"]]');
  // ...and the spawned table widget arrived already populated
  expect(cells[2]!.querySelectorAll(".table-widget table.grid tr").length).toBe(3);
});

it("a broken edit keeps the text, shows the failure, and clears when fixed", async () => {
  const cell = (await app.addCell("df = census()"))!;

  pane(cell.id).value = "df = census(";
  pane(cell.id).dispatchEvent(new FocusEvent("blur"));
  await app.whenIdle();

  const errorBox = root.querySelector(`[data-cell="${cell.id}"] .cell-error`)!;
  expect(errorBox.classList.contains("visible")).toBe(true);
  expect(errorBox.textContent).not.toBe("");
  expect(pane(cell.id).value).toBe("df = census("); // the edit itself is kept

  pane(cell.id).value = "df = census()";
  pane(cell.id).dispatchEvent(new FocusEvent("blur"));
  await app.whenIdle();
  expect(errorBox.classList.contains("visible")).toBe(false);
});
