from __future__ import annotations

import sys

import pytest

from tandem.document import Cell, LineRecord, Notebook, USER
from tandem.errors import ExecTimeout, ProtocolError, SpawnFailed, UnboundVariable
from tandem.executor import (
    BuiltinBackend,
    ExternalBackend,
    execute_prefix,
    execute_sandboxed,
)


def nb_of(*cells: tuple[str, str]) -> Notebook:
    return Notebook(
        tuple(
            Cell(cid, tuple(LineRecord(t, USER) for t in text.split("\n")))
            for cid, text in cells
        )
    )


def test_builtin_execute_and_snapshot():
    b = BuiltinBackend()
    assert b.execute("x = 2\ny = 3.5").ok
    assert b.snapshot("x") == {"type": "num", "hash": b.snapshot("x")["hash"], "value": 2}
    with pytest.raises(UnboundVariable):
        b.snapshot("zz")


def test_builtin_failed_block_leaves_no_trace():
    b = BuiltinBackend()
    b.execute("x = 1")
    r = b.execute("y = 2\nz = nope()")
    assert not r.ok and r.line == 1
    assert "y" not in b.env  # the whole block rolled back
    assert b.env["x"] == 1.0


def test_execute_prefix_runs_cells_in_order_and_attributes_failures():
    nb = nb_of(("c1", "df = census()"), ("c2", "%%mage table df\ndf = df[df.age < 65]"))
    b = BuiltinBackend()
    r = execute_prefix(nb, b)
    assert r.ok
    assert len(b.env["df"].rows) == 12

    nb_bad = nb_of(("c1", "x = 1"), ("c2", "%%mage table df\nok = x\nboom = nope()"))
    r = execute_prefix(nb_bad, b)
    assert not r.ok
    assert r.cell_id == "c2"
    assert r.line == 2  # invocation line offsets the attribution


def test_execute_prefix_stops_at_target():
    nb = nb_of(("c1", "x = 1"), ("c2", "x = 2"))
    b = BuiltinBackend()
    execute_prefix(nb, b, "c1")
    assert b.env["x"] == 1.0
    execute_prefix(nb, b, "c2")
    assert b.env["x"] == 2.0


def test_replay_is_deterministic():
    nb = nb_of(("c1", "df = census()\nimg = demo_grid()"), ("c2", "small = img[0:3, 0:3]"))
    b = BuiltinBackend()
    execute_prefix(nb, b)
    first = b.snapshot("small")["hash"]
    execute_prefix(nb, b)
    assert b.snapshot("small")["hash"] == first


def test_sandbox_does_not_touch_main_env():
    b = BuiltinBackend()
    b.execute("df = census()\nx = 5")
    before = {n: b.snapshot(n)["hash"] for n in b.env}
    result, snaps = execute_sandboxed(b, 'df = sort_by(df, "age")\nx = 99', ["df", "x"])
    assert result.ok
    assert snaps["x"]["value"] == 99
    assert snaps["df"]["value"]["rows"][0][0] == 22
    after = {n: b.snapshot(n)["hash"] for n in b.env}
    assert before == after


def test_sandbox_failure_reports_and_leaves_main_env():
    b = BuiltinBackend()
    b.execute("x = 5")
    result, snaps = execute_sandboxed(b, "y = nope()", ["x"])
    assert not result.ok and snaps == {}
    assert b.env["x"] == 5.0


def _script_backend(body: str) -> ExternalBackend:
    return ExternalBackend([sys.executable, "-u", "-c", body], timeout=5)


def test_external_backend_rejects_wrong_version():
    script = "import json,sys\nprint(json.dumps({'dialect':'x','version':2}),flush=True)\nsys.stdin.readline()"
    with pytest.raises(ProtocolError):
        _script_backend(script)


def test_external_backend_rejects_garbage():
    with pytest.raises(ProtocolError):
        _script_backend("print('hello there', flush=True)\nimport sys\nsys.stdin.readline()")


def test_external_backend_timeout():
    with pytest.raises(ExecTimeout):
        ExternalBackend([sys.executable, "-u", "-c", "import time\ntime.sleep(60)"], timeout=0.3)


def test_external_backend_spawn_failure():
    with pytest.raises(SpawnFailed):
        ExternalBackend(["/definitely/not/a/binary"])
