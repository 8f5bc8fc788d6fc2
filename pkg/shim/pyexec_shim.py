#!/usr/bin/env python3
"""External executor speaking the stdio protocol, backed by pandas.

Runs dataframe-dialect code against a real Python interpreter.  One JSON
request per stdin line, one JSON response per stdout line:

    {"op": "hello"}                          -> {"dialect": "dataframe", "version": 1}
    {"op": "reset"}                          -> {"ok": true}
    {"op": "exec", "code": ...}              -> {"ok", "error", "line"}
    {"op": "snapshot", "name": ...}          -> {"ok", "snapshot"} | {"ok": false, "error"}
    {"op": "exec_sandbox", "code", "want"}   -> {"ok", "error", "line", "snapshots"}

Every request is executed against a fork of the environment and committed
only on success, so a failing block (even one that mutates a frame in place)
leaves the visible state untouched.  Bad input of any shape gets an error
response, never a crash.

This file is deliberately standalone: it imports nothing from the engine it
serves, so the snapshot canonicalization here is an independent second
implementation of the wire format.
"""

from __future__ import annotations

import builtins
import copy
import hashlib
import io
import json
import sys
from contextlib import redirect_stdout

import numpy as np
import pandas as pd

DIALECT = "dataframe"
PROTOCOL_VERSION = 1

_CENSUS = {
    "age": [39, 50, 38, 53, 28, 67, 45, 31, 22, 59, 70, 36, 64, 25],
    "education": [
        "Bachelors", "Doctorate", "HS-grad", "Prof-school", "Masters",
        "Doctorate", "Doctorate", "Prof-school", "Some-college",
        "Prof-school", "HS-grad", "Masters", "Bachelors", "HS-grad",
    ],
    "income": [
        "<=50K", ">50K", "<=50K", ">50K", "<=50K", ">50K", "<=50K",
        ">50K", "<=50K", ">50K", "<=50K", ">50K", ">50K", "<=50K",
    ],
    "sex": [
        "Male", "Male", "Female", "Male", "Female", "Male", "Female",
        "Male", "Male", "Male", "Male", "Female", "Female", "Female",
    ],
    "hours": [40, 60, 40, 55, 40, 50, 40, 65, 20, 48, 30, 45, 50, 35],
}


def census() -> pd.DataFrame:
    return pd.DataFrame(_CENSUS)


def move_col(df: pd.DataFrame, name: str, idx: int) -> pd.DataFrame:
    cols = list(df.columns)
    cols.remove(name)
    cols.insert(idx, name)
    return df[cols]


def drop_col(df: pd.DataFrame, name: str) -> pd.DataFrame:
    return df.drop(columns=[name])


def sort_by(df: pd.DataFrame, col: str) -> pd.DataFrame:
    return df.sort_values(col, kind="stable")


_PRELUDE = {
    "census": census,
    "move_col": move_col,
    "drop_col": drop_col,
    "sort_by": sort_by,
}


# -- snapshots --------------------------------------------------------------


def _canon_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, str):
        return v
    f = float(v)
    return int(f) if f.is_integer() else f


def snapshot_obj(v) -> dict:
    if isinstance(v, pd.DataFrame):
        tag = "table"
        body = {
            "columns": [str(c) for c in v.columns],
            "rows": [
                [_canon_cell(c) for c in row]
                for row in v.itertuples(index=False, name=None)
            ],
        }
    elif isinstance(v, (bool, np.bool_)):
        tag, body = "bool", bool(v)
    elif isinstance(v, (int, float, np.integer, np.floating)):
        tag, body = "num", _canon_cell(v)
    elif isinstance(v, str):
        tag, body = "str", v
    else:
        raise TypeError(f"cannot snapshot a {type(v).__name__}")
    blob = json.dumps({"type": tag, "value": body}, sort_keys=True, separators=(",", ":"))
    return {"type": tag, "hash": hashlib.sha256(blob.encode()).hexdigest(), "value": body}


# -- execution --------------------------------------------------------------


def _fork(env: dict) -> dict:
    out = {}
    for k, v in env.items():
        try:
            out[k] = copy.deepcopy(v)
        except Exception:
            out[k] = v  # uncopyable objects (modules etc.) ride along by reference
    return out


def _run(code: str, scope: dict) -> dict:
    """Exec ``code`` in ``scope``; report ok/error with a 0-based line."""
    try:
        compiled = compile(code, "<cell>", "exec")
    except SyntaxError as exc:
        return {"ok": False, "error": f"SyntaxError: {exc.msg}", "line": (exc.lineno or 1) - 1}
    try:
        with redirect_stdout(io.StringIO()):  # user prints must not hit the protocol stream
            exec(compiled, scope)
        return {"ok": True, "error": None, "line": None}
    except BaseException as exc:
        line = None
        tb = exc.__traceback__
        while tb is not None:
            if tb.tb_frame.f_code.co_filename == "<cell>":
                line = tb.tb_lineno - 1
            tb = tb.tb_next
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}", "line": line}


class Shim:
    def __init__(self):
        self.env: dict = {}

    def _scope(self) -> dict:
        scope = {"__builtins__": builtins.__dict__}
        scope.update(_PRELUDE)
        scope.update(_fork(self.env))
        return scope

    def _user_vars(self, scope: dict) -> dict:
        return {
            k: v
            for k, v in scope.items()
            if k != "__builtins__" and _PRELUDE.get(k) is not v
        }

    def handle(self, req: dict) -> dict:
        op = req.get("op")
        if op == "hello":
            return {"dialect": DIALECT, "version": PROTOCOL_VERSION}
        if op == "reset":
            self.env = {}
            return {"ok": True}
        if op == "exec":
            scope = self._scope()
            result = _run(str(req.get("code", "")), scope)
            if result["ok"]:
                self.env = self._user_vars(scope)
            return result
        if op == "snapshot":
            name = req.get("name")
            if name not in self.env:
                return {"ok": False, "error": f"variable {name!r} is not bound"}
            try:
                return {"ok": True, "snapshot": snapshot_obj(self.env[name])}
            except TypeError as exc:
                return {"ok": False, "error": str(exc)}
        if op == "exec_sandbox":
            scope = self._scope()  # a fork either way; just never committed
            result = _run(str(req.get("code", "")), scope)
            snapshots = {}
            if result["ok"]:
                for name in req.get("want") or []:
                    if name in self._user_vars(scope):
                        try:
                            snapshots[name] = snapshot_obj(scope[name])
                        except TypeError:
                            pass
            result["snapshots"] = snapshots
            return result
        return {"ok": False, "error": f"unknown op {op!r}"}


def main() -> int:
    shim = Shim()
    for raw in sys.stdin:
        if not raw.strip():
            continue
        try:
            req = json.loads(raw)
            if not isinstance(req, dict):
                raise ValueError("request is not an object")
            resp = shim.handle(req)
        except Exception as exc:
            resp = {"ok": False, "error": f"bad request: {exc}"}
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
