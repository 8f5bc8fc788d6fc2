"""Newline-JSON protocol server with an HTTP/WebSocket side door.

One listening socket serves three kinds of clients.  Anything whose first
line starts with ``{`` speaks the native protocol: one JSON object per line,
``{"id": n, "method": ..., "params": {...}}`` in, ``{"id": n, "ok": ...}``
out, with server-pushed events using id 0.  Anything that starts with an
HTTP verb gets the static UI, or -- with an Upgrade header -- a WebSocket
connection carrying exactly the same JSON frames, so a browser and a test
harness exercise the same code path.

Every mutation is serialized through one lock, persisted to disk (when a
path is configured) before the response goes out, and broadcast to
subscribers in commit order.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import json
import logging
import os
import struct
from contextlib import suppress
from pathlib import Path

from .document import cell_to_json, save_notebook
from .errors import EngineError, MalformedFrame, UnknownMethod
from .session import Session, ToolInstance, ToolNotification

__all__ = ["NotebookServer", "serve", "run_server"]

log = logging.getLogger("tandem.server")

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
}


def _instance_json(inst: ToolInstance) -> dict:
    return {
        "id": inst.instance_id,
        "tool": inst.tool_name,
        "cell": inst.cell_id,
        "view": inst.view_id,
        "displayed": inst.displayed_var,
    }


def _notification_json(note: ToolNotification) -> dict:
    return {"instance": note.instance_id, "payload": note.payload}


def _error_json(exc: EngineError) -> dict:
    obj = {"code": exc.code, "message": str(exc)}
    if getattr(exc, "tool_message", None):
        obj["tool_message"] = exc.tool_message
    return obj


class NotebookServer:
    def __init__(
        self,
        session: Session,
        *,
        persist_path: str | Path | None = None,
        static_dir: str | Path | None = None,
    ):
        self.session = session
        self.persist_path = Path(persist_path) if persist_path else None
        self.static_dir = Path(static_dir) if static_dir else None
        self._lock = asyncio.Lock()
        self._subscribers: dict[int, asyncio.StreamWriter | _WebSocketWriter] = {}
        self._next_conn = 1

    # -- persistence and fanout --

    def _persist(self) -> None:
        if self.persist_path is None:
            return
        tmp = self.persist_path.with_suffix(self.persist_path.suffix + ".tmp")
        tmp.write_bytes(save_notebook(self.session.notebook))
        os.replace(tmp, self.persist_path)

    async def _broadcast(self, event: str, payload: dict) -> None:
        frame = {"id": 0, "method": "event", "params": {"event": event, **payload}}
        dead = []
        for conn_id, sink in self._subscribers.items():
            try:
                await _send_json(sink, frame)
            except (ConnectionError, RuntimeError, OSError):
                dead.append(conn_id)
        for conn_id in dead:
            self._subscribers.pop(conn_id, None)

    async def _notify(self, notes: list[ToolNotification]) -> None:
        for n in notes:
            await self._broadcast("tool-notify", _notification_json(n))

    # -- method handlers --

    async def dispatch(self, method: str, params: dict, conn) -> dict:
        handler = getattr(self, f"_m_{method.replace('-', '_')}", None)
        if handler is None:
            raise UnknownMethod(f"no method {method!r}")
        return await handler(params, conn)

    async def _m_open_notebook(self, params, conn) -> dict:
        nb = self.session.notebook
        return {
            "dialect": self.session.dialect,
            "notebook": {"version": nb.version, "cells": [cell_to_json(c) for c in nb.cells]},
            "instances": [_instance_json(i) for i in self.session.instances.values()],
        }

    async def _m_list_tools(self, params, conn) -> dict:
        tools = []
        for reg in self.session.registry.tools.values():
            tools.append(
                {
                    "name": reg.name,
                    "view": reg.view_id,
                    "params": [
                        {"name": p.name, "accepted": list(p.accepted)} for p in reg.params
                    ],
                    "actions": list(reg.actions),
                    "selection_targets": [
                        {"label": t.label, "tool": t.tool_name} for t in reg.selection_targets
                    ],
                }
            )
        return {"tools": tools}

    async def _m_subscribe(self, params, conn) -> dict:
        conn_id, sink = conn
        self._subscribers[conn_id] = sink
        return {"subscribed": True}

    async def _m_add_cell(self, params, conn) -> dict:
        text = params.get("text", "")
        if not isinstance(text, str):
            raise MalformedFrame("add_cell needs a string 'text'")
        index = params.get("index")
        if index is not None and not isinstance(index, int):
            raise MalformedFrame("add_cell 'index' must be an integer")
        cell = self.session.add_cell(text, index=index)
        self._persist()
        nb = self.session.notebook
        await self._broadcast(
            "cell-added",
            {"cell": cell_to_json(cell), "index": nb.cells.index(cell)},
        )
        return {"cell": cell_to_json(cell)}

    async def _m_invoke(self, params, conn) -> dict:
        cell_id = _need_str(params, "cell")
        instance, notes = self.session.invoke_tool(cell_id)
        self._persist()
        await self._broadcast("instance-created", {"instance": _instance_json(instance)})
        await self._notify(notes)
        return {
            "instance": _instance_json(instance),
            "notifications": [_notification_json(n) for n in notes],
        }

    async def _m_handoff(self, params, conn) -> dict:
        instance = _need_str(params, "instance")
        action = _need_str(params, "action")
        data = params.get("data", {})
        if not isinstance(data, dict):
            raise MalformedFrame("handoff 'data' must be an object")
        result = self.session.handoff(instance, action, data)
        self._persist()
        await self._broadcast("cell-changed", {"cell": cell_to_json(result.cell)})
        await self._notify(result.notifications)
        return {
            "cell": cell_to_json(result.cell),
            "snapshot": result.snapshot,
            "notifications": [_notification_json(n) for n in result.notifications],
        }

    async def _m_edit_cell(self, params, conn) -> dict:
        cell_id = _need_str(params, "cell")
        text = _need_str(params, "text")
        result = self.session.on_code_edit(cell_id, text)
        self._persist()
        await self._broadcast("cell-changed", {"cell": cell_to_json(result.cell)})
        await self._notify(result.notifications)
        execution = None
        if result.execution is not None:
            execution = {
                "ok": result.execution.ok,
                "error": result.execution.error,
                "cell": result.execution.cell_id,
                "line": result.execution.line,
            }
        return {
            "cell": cell_to_json(result.cell),
            "updated": [[seq, b] for seq, b in result.report.updated_actions],
            "removed": list(result.report.removed_actions),
            "freeze_boundary": result.report.new_freeze_boundary,
            "refresh_only": result.report.refresh_only,
            "execution": execution,
            "notifications": [_notification_json(n) for n in result.notifications],
        }

    async def _m_get_variable(self, params, conn) -> dict:
        return {"snapshot": self.session.get_variable(_need_str(params, "name"))}

    async def _m_transfer_selection(self, params, conn) -> dict:
        instance = _need_str(params, "instance")
        target = _need_str(params, "target")
        selection = params.get("selection")
        if not isinstance(selection, dict):
            raise MalformedFrame("transfer_selection 'selection' must be an object")
        result = self.session.transfer_selection(instance, selection, target)
        self._persist()
        nb = self.session.notebook
        await self._broadcast(
            "cell-added",
            {"cell": cell_to_json(result.cell), "index": nb.cells.index(result.cell)},
        )
        if result.instance is not None:
            await self._broadcast(
                "instance-created", {"instance": _instance_json(result.instance)}
            )
        await self._notify(result.notifications)
        return {
            "cell": cell_to_json(result.cell),
            "instance": None if result.instance is None else _instance_json(result.instance),
            "notifications": [_notification_json(n) for n in result.notifications],
        }

    # -- connection handling --

    async def handle_connection(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        conn_id = self._next_conn
        self._next_conn += 1
        try:
            first = await reader.readline()
            if not first:
                return
            if first.lstrip().startswith(b"{"):
                await self._json_loop(conn_id, reader, writer, first)
            else:
                await self._http(conn_id, reader, writer, first)
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            self._subscribers.pop(conn_id, None)
            writer.close()
            with _suppress_oserror():
                await writer.wait_closed()

    async def _handle_frame(self, conn, raw: str | bytes) -> dict:
        msg_id = 0
        try:
            frame = json.loads(raw)
            if not isinstance(frame, dict):
                raise MalformedFrame("frame is not an object")
            msg_id = frame.get("id", 0)
            if not isinstance(msg_id, int):
                raise MalformedFrame("frame id must be an integer")
            method = frame.get("method")
            if not isinstance(method, str):
                raise MalformedFrame("frame needs a method")
            params = frame.get("params", {})
            if not isinstance(params, dict):
                raise MalformedFrame("frame params must be an object")
            async with self._lock:
                result = await self.dispatch(method, params, conn)
            return {"id": msg_id, "ok": True, "result": result}
        except json.JSONDecodeError:
            return {"id": 0, "ok": False, "error": {"code": "malformed-frame", "message": "not JSON"}}
        except EngineError as exc:
            return {"id": msg_id, "ok": False, "error": _error_json(exc)}
        except Exception as exc:  # a handler bug must not kill the server
            log.exception("method failed")
            return {
                "id": msg_id,
                "ok": False,
                "error": {"code": "internal", "message": f"{type(exc).__name__}: {exc}"},
            }

    async def _json_loop(self, conn_id, reader, writer, first: bytes) -> None:
        line = first
        while line:
            if line.strip():
                resp = await self._handle_frame((conn_id, writer), line)
                await _send_json(writer, resp)
            line = await reader.readline()

    # -- HTTP + WebSocket --

    async def _http(self, conn_id, reader, writer, request_line: bytes) -> None:
        try:
            method, path, _ = request_line.decode("latin-1").split(" ", 2)
        except ValueError:
            writer.write(b"HTTP/1.1 400 Bad Request\r\ncontent-length: 0\r\n\r\n")
            await writer.drain()
            return
        headers = {}
        while True:
            line = await reader.readline()
            if line in (b"\r\n", b"\n", b""):
                break
            name, _, value = line.decode("latin-1").partition(":")
            headers[name.strip().lower()] = value.strip()

        if headers.get("upgrade", "").lower() == "websocket":
            await self._websocket(conn_id, reader, writer, headers)
            return
        if method != "GET":
            writer.write(b"HTTP/1.1 405 Method Not Allowed\r\ncontent-length: 0\r\n\r\n")
            await writer.drain()
            return
        await self._static(writer, path)

    async def _static(self, writer, path: str) -> None:
        body, ctype, status = b"not found", "text/plain", "404 Not Found"
        if self.static_dir is not None:
            rel = path.split("?", 1)[0].lstrip("/") or "index.html"
            target = (self.static_dir / rel).resolve()
            inside = target.is_relative_to(self.static_dir.resolve())
            if inside and target.is_file():
                body = target.read_bytes()
                ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
                status = "200 OK"
        head = (
            f"HTTP/1.1 {status}\r\ncontent-type: {ctype}\r\n"
            f"content-length: {len(body)}\r\nconnection: close\r\n\r\n"
        )
        writer.write(head.encode("latin-1") + body)
        await writer.drain()

    async def _websocket(self, conn_id, reader, writer, headers: dict) -> None:
        key = headers.get("sec-websocket-key")
        if not key:
            writer.write(b"HTTP/1.1 400 Bad Request\r\ncontent-length: 0\r\n\r\n")
            await writer.drain()
            return
        accept = base64.b64encode(
            hashlib.sha1((key + _WS_GUID).encode("latin-1")).digest()
        ).decode()
        writer.write(
            (
                "HTTP/1.1 101 Switching Protocols\r\nupgrade: websocket\r\n"
                f"connection: Upgrade\r\nsec-websocket-accept: {accept}\r\n\r\n"
            ).encode("latin-1")
        )
        await writer.drain()
        ws = _WebSocketWriter(writer)
        while True:
            msg = await _ws_read_message(reader, ws)
            if msg is None:
                break
            resp = await self._handle_frame((conn_id, ws), msg)
            await _send_json(ws, resp)


class _WebSocketWriter:
    """Wraps a StreamWriter so events and responses go out as text frames."""

    def __init__(self, writer: asyncio.StreamWriter):
        self.writer = writer

    async def send(self, data: bytes) -> None:
        length = len(data)
        if length < 126:
            head = struct.pack("!BB", 0x81, length)
        elif length < 1 << 16:
            head = struct.pack("!BBH", 0x81, 126, length)
        else:
            head = struct.pack("!BBQ", 0x81, 127, length)
        self.writer.write(head + data)
        await self.writer.drain()


async def _send_json(sink, frame: dict) -> None:
    data = json.dumps(frame).encode()
    if isinstance(sink, _WebSocketWriter):
        await sink.send(data)
    else:
        sink.write(data + b"\n")
        await sink.drain()


async def _ws_read_message(reader: asyncio.StreamReader, ws: _WebSocketWriter) -> bytes | None:
    """One complete text message, transparently answering pings; None on close."""
    message = b""
    while True:
        try:
            head = await reader.readexactly(2)
        except asyncio.IncompleteReadError:
            return None
        fin = head[0] & 0x80
        opcode = head[0] & 0x0F
        masked = head[1] & 0x80
        length = head[1] & 0x7F
        if length == 126:
            length = struct.unpack("!H", await reader.readexactly(2))[0]
        elif length == 127:
            length = struct.unpack("!Q", await reader.readexactly(8))[0]
        mask = await reader.readexactly(4) if masked else b""
        payload = await reader.readexactly(length) if length else b""
        if mask:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        if opcode == 8:  # close: echo and stop
            ws.writer.write(struct.pack("!BB", 0x88, 0))
            with _suppress_oserror():
                await ws.writer.drain()
            return None
        if opcode == 9:  # ping -> pong
            ws.writer.write(struct.pack("!BB", 0x8A, len(payload)) + payload)
            await ws.writer.drain()
            continue
        if opcode in (0, 1, 2):
            message += payload
            if fin:
                return message


def _suppress_oserror():
    return suppress(OSError, ConnectionError)


def _need_str(params: dict, key: str) -> str:
    value = params.get(key)
    if not isinstance(value, str):
        raise MalformedFrame(f"parameter {key!r} must be a string")
    return value


async def serve(
    session: Session,
    host: str = "127.0.0.1",
    port: int = 0,
    *,
    persist_path: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> tuple[asyncio.AbstractServer, NotebookServer]:
    nbs = NotebookServer(session, persist_path=persist_path, static_dir=static_dir)
    server = await asyncio.start_server(nbs.handle_connection, host, port)
    return server, nbs


def run_server(
    session: Session,
    host: str = "127.0.0.1",
    port: int = 0,
    *,
    persist_path: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> None:
    """Serve until interrupted (the CLI entry point)."""

    async def main() -> None:
        server, _ = await serve(
            session, host, port, persist_path=persist_path, static_dir=static_dir
        )
        addr = server.sockets[0].getsockname()
        log.info("listening on %s:%s", addr[0], addr[1])
        print(json.dumps({"listening": {"host": addr[0], "port": addr[1]}}), flush=True)
        async with server:
            await server.serve_forever()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
