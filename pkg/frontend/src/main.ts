import { NotebookApp } from "./app.js";
import { WebSocketTransport } from "./transport.js";
import { h } from "./widgets/widget.js";

async function boot() {
  const transport = await WebSocketTransport.connect(`ws://${location.host}/`);
  const root = document.getElementById("app")!;

  const toolbar = h("div", "toolbar");
  const entry = document.createElement("textarea");
  entry.className = "new-cell";
  entry.placeholder = "new cell… (include a %%mage line to attach a tool)";
  entry.rows = 2;
  const addBtn = h("button", "", "Add cell") as HTMLButtonElement;
  const invokeBtn = h("button", "", "Invoke last cell") as HTMLButtonElement;
  toolbar.append(entry, addBtn, invokeBtn);
  root.append(toolbar);

  const app = new NotebookApp(root, transport);
  await app.connect();

  addBtn.addEventListener("click", () => {
    const text = entry.value.trim();
    if (!text) return;
    void app.addCell(text).then(() => (entry.value = ""));
  });
  invokeBtn.addEventListener("click", () => {
    const last = app.cellList.lastElementChild as HTMLElement | null;
    const cellId = last?.dataset.cell;
    if (cellId) void app.invoke(cellId);
  });
}

void boot();
