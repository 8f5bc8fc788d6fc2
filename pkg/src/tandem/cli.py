"""Command line front end: serve a notebook, replay a trace, recognize code.

JSON results go to stdout, logs and diagnostics to stderr.  Exit codes: 0 on
success, 1 when an operation fails (a bad trace record, a broken notebook),
2 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .document import Notebook, load_notebook, save_notebook, writable_region
from .errors import EngineError
from .executor import BuiltinBackend, ExecutorBackend, ExternalBackend
from .server import run_server
from .session import Session
from .tools import canonical_registry, read_pack_dir

log = logging.getLogger("tandem.cli")


def _build_backend(spec: str) -> ExecutorBackend:
    if spec == "builtin":
        return BuiltinBackend()
    if spec.startswith("cmd:"):
        return ExternalBackend(spec[len("cmd:") :])
    raise ValueError(f"--executor must be 'builtin' or 'cmd:<command>', not {spec!r}")


def _build_session(notebook: Path | None, packs: str | None, backend: ExecutorBackend) -> Session:
    registry = canonical_registry(read_pack_dir(packs) if packs else None)
    nb = Notebook()
    if notebook is not None and notebook.exists():
        nb = load_notebook(notebook.read_bytes())
    return Session(nb, registry, backend)


# --- serve ------------------------------------------------------------------------


def cmd_serve(args: argparse.Namespace) -> int:
    backend = _build_backend(args.executor)
    session = _build_session(Path(args.notebook), args.packs, backend)
    result = session.run_notebook()
    if not result.ok:
        log.warning("notebook does not fully execute: cell %s: %s", result.cell_id, result.error)
    try:
        run_server(
            session,
            host=args.host,
            port=args.port,
            persist_path=args.notebook,
            static_dir=args.static,
        )
    finally:
        backend.close()
    return 0


# --- replay -----------------------------------------------------------------------


def _replay_record(session: Session, record: dict, last_instance: list[str | None]) -> None:
    op = record.get("op")
    if op == "cell":
        session.add_cell(record.get("text", ""))
        session.run_notebook()
    elif op == "invoke":
        cell = session.add_invocation_cell(record["tool"], record.get("args", []))
        inst, _ = session.invoke_tool(cell.cell_id)
        last_instance[0] = inst.instance_id
    elif op == "handoff":
        iid = record.get("instance") or last_instance[0]
        if iid is None:
            raise EngineError("handoff before any invoke")
        session.handoff(iid, record["action"], record.get("data", {}))
    elif op == "edit":
        session.on_code_edit(record["cell"], record.get("text", ""))
    elif op == "transfer":
        iid = record.get("instance") or last_instance[0]
        if iid is None:
            raise EngineError("transfer before any invoke")
        result = session.transfer_selection(iid, record.get("selection", {}), record["target"])
        if result.instance is not None:
            last_instance[0] = result.instance.instance_id
    else:
        raise EngineError(f"unknown trace op {op!r}")


def cmd_replay(args: argparse.Namespace) -> int:
    backend = _build_backend(args.executor)
    try:
        base = Path(args.base) if args.base else None
        session = _build_session(base, args.packs, backend)
        result = session.run_notebook()
        if not result.ok:
            print(
                json.dumps({"ok": False, "record": None, "error": {"message": result.error}})
            )
            return 1

        records = []
        if args.trace:
            with open(args.trace) as fh:
                records = [json.loads(ln) for ln in fh if ln.strip()]

        last_instance: list[str | None] = [None]
        for i, record in enumerate(records):
            try:
                _replay_record(session, record, last_instance)
            except (EngineError, KeyError, TypeError) as exc:
                log.error("record %d failed: %s", i, exc)
                error = {"message": str(exc)}
                if isinstance(exc, EngineError):
                    error["code"] = exc.code
                print(json.dumps({"ok": False, "record": i, "error": error}))
                return 1

        hashes = {}
        for inst in session.instances.values():
            if inst.displayed_var is not None and inst.last_snapshot is not None:
                hashes[inst.displayed_var] = inst.last_snapshot["hash"]
        for name in args.var or []:
            hashes[name] = session.get_variable(name)["hash"]
        if args.notebook:
            Path(args.notebook).write_bytes(save_notebook(session.notebook))
        print(
            json.dumps(
                {
                    "ok": True,
                    "cells": [c.cell_id for c in session.notebook.cells],
                    "instances": sorted(session.instances),
                    "hashes": hashes,
                },
                sort_keys=True,
            )
        )
        return 0
    finally:
        backend.close()


# --- recognize ---------------------------------------------------------------------


def cmd_recognize(args: argparse.Namespace) -> int:
    from .templates import recognize_line

    registry = canonical_registry(read_pack_dir(args.packs) if args.packs else None)
    recognizers = registry.all_recognizers(args.dialect)
    try:
        nb = load_notebook(Path(args.notebook).read_bytes())
    except (OSError, EngineError) as exc:
        log.error("cannot read notebook: %s", exc)
        return 1

    cells = []
    for cell in nb.cells:
        first_code = 0 if cell.invocation() is None else 1
        actions = []
        unrecognized = []
        for i, ln in enumerate(cell.lines):
            if i < first_code or not ln.text.strip():
                continue
            hit = recognize_line(recognizers, ln.text)
            if hit is None:
                unrecognized.append(i)
            else:
                template_id, bindings = hit
                actions.append(
                    {
                        "line": i,
                        "template": template_id,
                        "action": registry.template_by_id[template_id].action_name,
                        "bindings": bindings,
                    }
                )
        ws, we = writable_region(cell)
        cells.append(
            {
                "id": cell.cell_id,
                "actions": actions,
                "unrecognized": unrecognized,
                "writable": [ws, we],
                "frozen": [
                    i for i, ln in enumerate(cell.lines) if type(ln.prov).__name__ == "FrozenUser"
                ],
            }
        )
    print(json.dumps({"cells": cells}, sort_keys=True))
    return 0


# --- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tandem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve_p = sub.add_parser("serve", help="serve a notebook over the JSON protocol")
    serve_p.add_argument("--notebook", required=True, help="notebook file (created if missing)")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=0, help="0 picks a free port")
    serve_p.add_argument("--packs", help="directory of extra *.pack files")
    serve_p.add_argument("--executor", default="builtin", help="builtin or cmd:<command>")
    serve_p.add_argument("--static", help="directory of static UI files to serve over HTTP")
    serve_p.set_defaults(func=cmd_serve)

    replay_p = sub.add_parser("replay", help="apply a trace of operations to a notebook")
    replay_p.add_argument("--trace", help="JSON-lines trace file; omit to just execute")
    replay_p.add_argument("--notebook", help="where to write the resulting notebook")
    replay_p.add_argument("--base", help="starting notebook; default is empty")
    replay_p.add_argument("--packs")
    replay_p.add_argument("--executor", default="builtin")
    replay_p.add_argument("--var", action="append", help="also report this variable's hash")
    replay_p.set_defaults(func=cmd_replay)

    rec_p = sub.add_parser("recognize", help="report recognizable actions in a notebook")
    rec_p.add_argument("--notebook", required=True)
    rec_p.add_argument("--packs")
    rec_p.add_argument("--dialect", default="minitable")
    rec_p.set_defaults(func=cmd_recognize)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        parser.error(str(exc))  # exits 2
    except EngineError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
