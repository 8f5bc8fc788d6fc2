"""Pluggable execution backends and whole-notebook replay.

The engine never mutates interpreter state incrementally: any change to the
document re-executes the notebook prefix from a reset environment, which is
what makes saved notebooks replayable and snapshot hashes reproducible.

External interpreters attach over a newline-delimited JSON stdio protocol::

    -> {"op": "hello"}                          <- {"dialect": ..., "version": 1}
    -> {"op": "reset"}                          <- {"ok": true}
    -> {"op": "exec", "code": ...}              <- {"ok": bool, "error": ..., "line": ...}
    -> {"op": "snapshot", "name": ...}          <- {"ok": true, "snapshot": {...}}
                                                   | {"ok": false, "error": ...}
    -> {"op": "exec_sandbox", "code": ..., "want": [...]}
                                                <- {"ok": bool, "error": ...,
                                                    "snapshots": {name: {...}}}

``exec_sandbox`` must run against a copy of the environment: tools use it to
preview or preprocess data, and it must never be observable from the main
environment.
"""

from __future__ import annotations

import json
import selectors
import shlex
import subprocess
from contextlib import suppress
from dataclasses import dataclass
from typing import Protocol

from . import fixtures  # noqa: F401  (registers the demo builtins)
from .document import Notebook, parse_invocation
from .errors import (
    ExecTimeout,
    MiniTableError,
    NonIdentifierArgument,
    NotAnInvocation,
    ProtocolError,
    SpawnFailed,
    UnboundVariable,
    UnknownCell,
)
from .minitable import Env, eval_program, parse_program, snapshot_value

PROTOCOL_VERSION = 1


@dataclass
class ExecutionResult:
    ok: bool
    error: str | None = None
    cell_id: str | None = None
    line: int | None = None  # 0-based line index within the failing cell

    @classmethod
    def success(cls) -> "ExecutionResult":
        return cls(ok=True)


class ExecutorBackend(Protocol):
    dialect: str

    def reset(self) -> None: ...

    def execute(self, code: str) -> ExecutionResult: ...

    def snapshot(self, name: str) -> dict: ...

    def exec_sandbox(
        self, code: str, want: list[str]
    ) -> tuple[ExecutionResult, dict[str, dict]]: ...

    def close(self) -> None: ...


class BuiltinBackend:
    """In-process minitable interpreter."""

    dialect = "minitable"

    def __init__(self):
        self.env: Env = {}

    def reset(self) -> None:
        self.env = {}

    def execute(self, code: str) -> ExecutionResult:
        try:
            # parse+eval over a copy: a failing block leaves no trace
            self.env = eval_program(parse_program(code), self.env)
            return ExecutionResult.success()
        except MiniTableError as exc:
            line = getattr(exc, "line", None)
            return ExecutionResult(
                ok=False, error=str(exc), line=None if line is None else line - 1
            )

    def snapshot(self, name: str) -> dict:
        if name not in self.env:
            raise UnboundVariable(f"variable {name!r} is not bound")
        return snapshot_value(self.env[name])

    def exec_sandbox(
        self, code: str, want: list[str]
    ) -> tuple[ExecutionResult, dict[str, dict]]:
        # values are immutable, so a shallow copy of the bindings is a full fork
        scratch = dict(self.env)
        try:
            scratch = eval_program(parse_program(code), scratch)
        except MiniTableError as exc:
            line = getattr(exc, "line", None)
            return (
                ExecutionResult(
                    ok=False, error=str(exc), line=None if line is None else line - 1
                ),
                {},
            )
        snaps = {n: snapshot_value(scratch[n]) for n in want if n in scratch}
        return ExecutionResult.success(), snaps

    def close(self) -> None:
        pass


class ExternalBackend:
    """A child interpreter process speaking the stdio protocol."""

    def __init__(self, command: str | list[str], *, timeout: float = 30.0):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SpawnFailed(f"cannot spawn {argv!r}: {exc}") from None
        self.timeout = timeout
        self._sel = selectors.DefaultSelector()
        self._sel.register(self.proc.stdout, selectors.EVENT_READ)
        hello = self._rpc({"op": "hello"})
        if hello.get("version") != PROTOCOL_VERSION:
            self.close()
            raise ProtocolError(f"backend protocol version {hello.get('version')!r} != 1")
        if not isinstance(hello.get("dialect"), str):
            self.close()
            raise ProtocolError("backend hello carries no dialect")
        self.dialect: str = hello["dialect"]

    def _rpc(self, msg: dict) -> dict:
        if self.proc.poll() is not None:
            raise ProtocolError("backend process has exited")
        try:
            self.proc.stdin.write(json.dumps(msg) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"backend pipe closed: {exc}") from None
        if not self._sel.select(self.timeout):
            raise ExecTimeout(f"backend did not answer {msg.get('op')!r} in {self.timeout}s")
        line = self.proc.stdout.readline()
        if not line:
            raise ProtocolError("backend closed its stdout")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"backend sent a non-JSON frame: {line[:120]!r}") from None
        if not isinstance(resp, dict):
            raise ProtocolError("backend frame is not an object")
        return resp

    def reset(self) -> None:
        self._rpc({"op": "reset"})

    def execute(self, code: str) -> ExecutionResult:
        resp = self._rpc({"op": "exec", "code": code})
        return ExecutionResult(
            ok=bool(resp.get("ok")), error=resp.get("error"), line=resp.get("line")
        )

    def snapshot(self, name: str) -> dict:
        resp = self._rpc({"op": "snapshot", "name": name})
        if not resp.get("ok"):
            raise UnboundVariable(resp.get("error") or f"variable {name!r} is not bound")
        snap = resp.get("snapshot")
        if not isinstance(snap, dict) or {"type", "hash", "value"} - snap.keys():
            raise ProtocolError("backend snapshot is malformed")
        return snap

    def exec_sandbox(
        self, code: str, want: list[str]
    ) -> tuple[ExecutionResult, dict[str, dict]]:
        resp = self._rpc({"op": "exec_sandbox", "code": code, "want": want})
        result = ExecutionResult(
            ok=bool(resp.get("ok")), error=resp.get("error"), line=resp.get("line")
        )
        snaps = resp.get("snapshots") or {}
        if not isinstance(snaps, dict):
            raise ProtocolError("backend sandbox snapshots are malformed")
        return result, snaps

    def close(self) -> None:
        with suppress(Exception):
            self._sel.close()
        if self.proc.poll() is None:
            with suppress(Exception):
                self.proc.stdin.close()
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


def cell_body(cell) -> tuple[str, int]:
    """The executable text of a cell plus the document-line offset of it."""
    lines = [ln.text for ln in cell.lines]
    offset = 0
    if lines:
        try:
            parse_invocation(lines[0])
            offset = 1
        except (NotAnInvocation, NonIdentifierArgument):
            pass
    return "\n".join(lines[offset:]), offset


def execute_prefix(
    nb: Notebook, backend: ExecutorBackend, through_cell_id: str | None = None
) -> ExecutionResult:
    """Reset the backend and run every cell through the target (inclusive)."""
    if through_cell_id is not None and nb.cell(through_cell_id) is None:
        raise UnknownCell(f"no cell {through_cell_id!r}")
    backend.reset()
    for cell in nb.cells:
        code, offset = cell_body(cell)
        if code.strip():
            result = backend.execute(code)
            if not result.ok:
                result.cell_id = cell.cell_id
                if result.line is not None:
                    result.line += offset
                return result
        if cell.cell_id == through_cell_id:
            break
    return ExecutionResult.success()


def execute_sandboxed(
    backend: ExecutorBackend, code: str, want: list[str]
) -> tuple[ExecutionResult, dict[str, dict]]:
    """Run code against a copy of the backend environment; main state is untouched."""
    return backend.exec_sandbox(code, want)
