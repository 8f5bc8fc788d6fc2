import { ChildProcess, spawn } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

const REPO_ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "..", "..");

export interface RunningServer {
  port: number;
  notebookPath: string;
  stop(): void;
}

/** Spawn `tandem serve` on a free port and wait for its listening line. */
export function startServer(): Promise<RunningServer> {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "tandem-ui-"));
  const notebookPath = path.join(dir, "notebook.json");
  const child: ChildProcess = spawn(
    "python3",
    ["-m", "tandem.cli", "serve", "--notebook", notebookPath, "--port", "0"],
    {
      env: {
        ...process.env,
        PYTHONPATH: path.join(REPO_ROOT, "src"),
        PYTHONUNBUFFERED: "1",
      },
      stdio: ["ignore", "pipe", "pipe"],
    },
  );

  return new Promise((resolve, reject) => {
    let out = "";
    let err = "";
    const timer = setTimeout(() => {
      child.kill();
      reject(new Error(`server did not start:\n${out}\n${err}`));
    }, 15_000);
    child.stderr!.on("data", (chunk) => (err += chunk));
    child.stdout!.on("data", (chunk) => {
      out += chunk;
      const line = out.split("\n").find((l) => l.includes('"listening"'));
      if (!line) return;
      clearTimeout(timer);
      const port = JSON.parse(line).listening.port as number;
      resolve({
        port,
        notebookPath,
        stop: () => {
          child.kill();
          fs.rmSync(dir, { recursive: true, force: true });
        },
      });
    });
    child.on("exit", (code) => {
      if (code !== null && code !== 0) {
        clearTimeout(timer);
        reject(new Error(`server exited ${code}:\n${out}\n${err}`));
      }
    });
  });
}
