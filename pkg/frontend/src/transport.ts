import { EventJson, RpcError } from "./protocol.js";

export interface Transport {
  call(method: string, params?: Record<string, unknown>): Promise<any>;
  onEvent(handler: (ev: EventJson) => void): void;
  close(): void;
}

type Pending = { resolve: (v: any) => void; reject: (e: Error) => void };

/**
 * Request/response bookkeeping shared by every framing of the protocol.
 * Subclasses supply the actual pipe (WebSocket message, TCP line, ...) and
 * feed incoming frames to `dispatch`.
 */
export abstract class JsonRpcTransport implements Transport {
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private handlers: ((ev: EventJson) => void)[] = [];

  protected abstract sendRaw(text: string): void;
  abstract close(): void;

  call(method: string, params: Record<string, unknown> = {}): Promise<any> {
    const id = this.nextId++;
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      this.sendRaw(JSON.stringify({ id, method, params }));
    });
  }

  onEvent(handler: (ev: EventJson) => void): void {
    this.handlers.push(handler);
  }

  protected dispatch(frame: any): void {
    if (frame && frame.id === 0 && frame.method === "event") {
      for (const h of this.handlers) h(frame.params as EventJson);
      return;
    }
    const entry = this.pending.get(frame?.id);
    if (!entry) return; // stray frame; nothing waits on it
    this.pending.delete(frame.id);
    if (frame.ok) entry.resolve(frame.result);
    else entry.reject(new RpcError(frame.error ?? { code: "unknown", message: "request failed" }));
  }

  /** Fail everything in flight, e.g. when the connection drops. */
  protected failAll(reason: string): void {
    for (const [, entry] of this.pending) {
      entry.reject(new RpcError({ code: "connection", message: reason }));
    }
    this.pending.clear();
  }
}

/** Browser transport: one JSON frame per WebSocket message. */
export class WebSocketTransport extends JsonRpcTransport {
  private constructor(private ws: WebSocket) {
    super();
    ws.onmessage = (m) => this.dispatch(JSON.parse(String(m.data)));
    ws.onclose = () => this.failAll("connection closed");
  }

  static connect(url: string): Promise<WebSocketTransport> {
    return new Promise((resolve, reject) => {
      const ws = new WebSocket(url);
      ws.onopen = () => resolve(new WebSocketTransport(ws));
      ws.onerror = () => reject(new Error(`cannot connect to ${url}`));
    });
  }

  protected sendRaw(text: string): void {
    this.ws.send(text);
  }

  close(): void {
    this.ws.close();
  }
}
