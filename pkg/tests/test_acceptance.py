"""The shipped guarantees, exercised end to end.

Every test in this module drives a public surface (session, wire protocol,
CLI) the way a client would, and checks the outcome against an expectation
computed independently of the machinery under test: fixture rows filtered by
hand, programs evaluated directly, or a naive uncompacted history.
"""

from __future__ import annotations

import asyncio
import json
import random
import re
import time
from collections import Counter

from helpers import random_bindings

from tandem.cli import main as cli_main
from tandem.document import (
    FrozenUser,
    Generated,
    Notebook,
    load_notebook,
    save_notebook,
    writable_region,
)
from tandem.executor import BuiltinBackend, execute_sandboxed
from tandem.fixtures import census_table
from tandem.minitable import eval_program, parse_program, snapshot_value
from tandem.server import serve
from tandem.session import Session
from tandem.templates import compile_recognizer, instantiate, recognize_line, select_variant
from tandem.tools import canonical_registry


def fresh_session(*setup: str) -> Session:
    s = Session(Notebook(), canonical_registry(), BuiltinBackend())
    for text in setup:
        s.add_cell(text)
    return s


def table_session() -> tuple[Session, str, str]:
    s = fresh_session("df = census()")
    cell = s.add_invocation_cell("table", ["df"])
    inst, _ = s.invoke_tool(cell.cell_id)
    return s, inst.instance_id, cell.cell_id


# --- 1. template round trip ----------------------------------------------------


def test_round_trip_every_shipped_template():
    """instantiate → recognize is the identity, 500 random bindings a template.

    Each line is matched with only its own template's recognizer, so this
    measures the grammar itself rather than declaration-order tie-breaks.
    """
    registry = canonical_registry()
    rng = random.Random(9001)
    assert len(registry.templates) >= 12  # both dialects' worth of shapes
    start = time.monotonic()
    for template in registry.templates:
        rec = compile_recognizer(template)
        for _ in range(500):
            bindings = random_bindings(template, rng)
            line = instantiate(template, bindings)
            got = recognize_line([rec], line)
            assert got == (template.template_id, bindings), (template.template_id, line, got)
    assert time.monotonic() - start < 10.0


# --- 2. filter click, persistence, replay --------------------------------------


def test_filter_click_generates_one_line_and_replays_to_same_hash(tmp_path, capsys):
    s, iid, cid = table_session()
    hand = s.handoff(iid, "filter", {"COL": "age", "EXPR": "< 65"})

    cell = s.notebook.cell(cid)
    generated = [ln.text for ln in cell.lines if isinstance(ln.prov, Generated)]
    assert generated == ["df = df[df.age < 65]"]

    # the snapshot holds exactly the fixture rows that pass, in fixture order
    snap = hand.snapshot["value"]
    age = snap["columns"].index("age")
    expected = [list(r) for r in census_table().rows if r[age] < 65]
    assert snap["rows"] == expected
    assert 0 < len(expected) < len(census_table().rows)

    nb_path = tmp_path / "saved.json"
    nb_path.write_bytes(save_notebook(s.notebook))
    code = cli_main(["replay", "--base", str(nb_path), "--var", "df"])
    out = json.loads(capsys.readouterr().out)
    assert code == 0
    assert out["hashes"]["df"] == hand.snapshot["hash"]


# --- 3. code edits read back into the tool -------------------------------------


def grid_session() -> tuple[Session, str, str]:
    s = fresh_session("n = 850", "img = demo_grid()")
    cell = s.add_invocation_cell("grid", ["img"])
    inst, _ = s.invoke_tool(cell.cell_id)
    s.handoff(
        inst.instance_id,
        "crop",
        {"OUT": "crop_img", "Y1": "0", "Y2": "850", "X1": "0", "X2": "850"},
    )
    return s, inst.instance_id, cell.cell_id


def test_crop_edit_reads_back_as_binding_update():
    s, iid, cid = grid_session()
    result = s.on_code_edit(cid, "%%mage grid img\ncrop_img = img[0:400, 0:850]")

    kinds = [n.payload["kind"] for n in result.notifications]
    assert kinds == ["binding-update"]
    [update] = result.notifications
    assert update.instance_id == iid
    assert update.payload["bindings"]["Y2"] == "400"
    assert update.payload["bindings"]["X2"] == "850"

    # the edited line really ran: crop_img is now the 400-row slice
    expected = eval_program(parse_program("img = demo_grid()\nc = img[0:400, 0:850]"), {})
    assert s.get_variable("crop_img")["hash"] == snapshot_value(expected["c"])["hash"]


def test_crop_edit_to_a_variable_degrades_to_refresh_only():
    """An INDEX blank takes literal digits; `n` falls out of the template."""
    s, iid, cid = grid_session()
    result = s.on_code_edit(cid, "%%mage grid img\ncrop_img = img[0:n, 0:850]")

    kinds = [n.payload["kind"] for n in result.notifications]
    assert kinds == ["data-refresh"]
    assert result.notifications[0].instance_id == iid
    assert result.report.refresh_only
    assert result.execution is not None and result.execution.ok
    # with n = 850 bound upstream, the slice now covers the whole image
    assert s.get_variable("crop_img")["hash"] == s.get_variable("img")["hash"]


# --- 4. freezing is monotone ----------------------------------------------------


def test_freezing_is_monotone_under_random_edit_sequences():
    """Once frozen, never thawed; new actions land strictly below user code.

    100 rounds of 1-4 edits each: every edit splices an unrecognizable line
    into a random position and sometimes rewrites a literal inside a writable
    generated line.  Frozen text may only accumulate, and the next handoff
    must emit below the deepest spliced line.
    """
    rng = random.Random(404)
    for round_ in range(100):
        s, iid, cid = table_session()
        for _ in range(rng.randrange(1, 3)):
            op = rng.choice(("<", "<=", ">", ">=", "!="))
            s.handoff(
                iid,
                "filter",
                {"COL": rng.choice(("age", "hours")), "EXPR": f"{op} {rng.randrange(-5, 120)}"},
            )

        markers: list[str] = []
        frozen: Counter[str] = Counter()
        for step in range(rng.randrange(1, 5)):
            cell = s.notebook.cell(cid)
            lines = [ln.text for ln in cell.lines]
            if rng.random() < 0.4:
                ws, we = writable_region(cell)
                if we > ws:
                    i = rng.randrange(ws, we)
                    lines[i] = re.sub(r"-?\d+(?=\]$)", str(rng.randrange(-5, 120)), lines[i])
            marker = f"poke{round_}_{step} = {rng.randrange(100)}"
            markers.append(marker)
            lines.insert(rng.randrange(1, len(lines) + 1), marker)
            s.on_code_edit(cid, "\n".join(lines))

            now = Counter(
                ln.text
                for ln in s.notebook.cell(cid).lines
                if isinstance(ln.prov, FrozenUser)
            )
            assert not frozen - now, f"thawed lines in round {round_}: {frozen - now}"
            frozen = now

        s.handoff(iid, "filter", {"COL": "age", "EXPR": "< 200"})
        texts = [ln.text for ln in s.notebook.cell(cid).lines]
        assert all(m in texts for m in markers)
        deepest = max(i for i, t in enumerate(texts) if t in markers)
        ws, we = writable_region(s.notebook.cell(cid))
        assert we > ws > deepest


# --- 5. compaction preserves meaning --------------------------------------------

_STRINGS = ("Male", "Female", ">50K", "<=50K", "HS-grad", "Doctorate", "zz")


def random_table_steps(
    rng: random.Random, n: int, *, no_adjacent_column_repeat: bool = False
) -> list[tuple[str, dict[str, str]]]:
    """A valid random action sequence over a census table.

    Column names and indices are tracked so every step is executable at the
    point it runs.  With ``no_adjacent_column_repeat`` consecutive steps never
    touch the same column, which keeps the compactor from folding anything.
    """
    cols = ["age", "education", "income", "sex", "hours"]
    numeric = {"age", "hours"}
    steps: list[tuple[str, dict[str, str]]] = []
    fresh = 0

    def column_of(action: str, data: dict[str, str]) -> str | None:
        if action in ("insert-column", "move-column", "drop-column"):
            return data["NAME"].strip('"')
        return None

    while len(steps) < n:
        ops = ["insert-column"]
        if cols:
            ops += ["filter", "sort-column", "move-column", "drop-column"]
        op = rng.choice(ops)
        if op == "filter":
            col = rng.choice(cols)
            cmp_ = rng.choice(("<", "<=", ">", ">=", "==", "!="))
            if col in numeric:
                rhs = str(rng.randrange(-5, 120))
            else:
                rhs = f'"{rng.choice(_STRINGS)}"'
            step = ("filter", {"COL": col, "EXPR": f"{cmp_} {rhs}"})
        elif op == "sort-column":
            step = ("sort-column", {"COL": f'"{rng.choice(cols)}"'})
        elif op == "insert-column":
            fresh += 1
            name = f"q{fresh}"
            idx = rng.randrange(0, len(cols) + 1)
            step = (
                "insert-column",
                {"IDX": str(idx), "NAME": f'"{name}"', "FILL": str(rng.randrange(0, 9))},
            )
        elif op == "move-column":
            name = rng.choice(cols)
            step = ("move-column", {"NAME": f'"{name}"', "IDX": str(rng.randrange(0, len(cols)))})
        else:
            step = ("drop-column", {"NAME": f'"{rng.choice(cols)}"'})

        if no_adjacent_column_repeat and steps:
            prev = column_of(*steps[-1])
            here = column_of(*step)
            if prev is not None and prev == here:
                continue

        # commit the step and its effect on the simulated schema
        action, data = step
        if action == "insert-column":
            cols.insert(int(data["IDX"]), data["NAME"].strip('"'))
            numeric.add(data["NAME"].strip('"'))
        elif action == "move-column":
            name = data["NAME"].strip('"')
            cols.remove(name)
            cols.insert(int(data["IDX"]), name)
        elif action == "drop-column":
            name = data["NAME"].strip('"')
            cols.remove(name)
            numeric.discard(name)
        steps.append(step)
    return steps


def test_compacted_cell_matches_the_naive_history():
    """200 random sequences: the rewritten cell and an append-only transcript
    of the same actions produce snapshot-identical tables, and the cell never
    carries more lines than state entries the sequence touched."""
    registry = canonical_registry()
    rng = random.Random(5150)
    for _ in range(200):
        steps = random_table_steps(rng, rng.randrange(1, 7))
        s, iid, cid = table_session()
        inst = s.instances[iid]
        affected: set[str] = set()
        for action, data in steps:
            hand = s.handoff(iid, action, data)
            affected |= set(inst.state_dict)

        naive = ["df = census()"] + [
            instantiate(
                select_variant(registry.variant_sets[action], "table", "minitable"),
                {**data, "DF": "df"},
            )
            for action, data in steps
        ]
        env = eval_program(parse_program("\n".join(naive)), {})
        assert snapshot_value(env["df"])["hash"] == hand.snapshot["hash"], steps

        ws, we = writable_region(s.notebook.cell(cid))
        assert we - ws <= len(affected), steps


# --- 6. sandboxed execution leaks nothing ---------------------------------------


def test_sandboxed_programs_never_touch_the_main_environment():
    backend = BuiltinBackend()
    setup = backend.execute('df = census()\nx = 5\nname = "hello"\nbig = demo_grid()\ng = big[0:8, 0:9]')
    assert setup.ok, setup.error
    baseline = {n: backend.snapshot(n)["hash"] for n in ("df", "x", "name", "g")}
    big_grid = backend.env["big"]  # too large to re-hash every round; identity suffices

    rng = random.Random(606)
    for k in range(200):
        pool = [
            f"x = {rng.randrange(1000)}",
            f"t{k} = df[df.age < {rng.randrange(100)}]",
            'df = drop_col(df, "age")',
            'df = sort_by(df, "education")',
            f"g = g[0:{rng.randrange(1, 8)}, 0:{rng.randrange(1, 9)}]",
            f'name = "{rng.choice(("a", "bb", "ccc"))}"',
            "df = census()",
        ]
        lines = [rng.choice(pool) for _ in range(rng.randrange(1, 5))]
        if rng.random() < 0.35:  # a third of the programs blow up partway
            bad = rng.choice(
                [
                    "boom = never_bound",
                    'df = drop_col(df, "no_such_col")',
                    'df = df[df.age < "not a number"]',
                    "x = census(",
                ]
            )
            lines.insert(rng.randrange(0, len(lines) + 1), bad)

        execute_sandboxed(backend, "\n".join(lines), ["df", "x", f"t{k}"])
        assert set(backend.env) == set(baseline) | {"big"}
        assert backend.env["big"] is big_grid
        for name, digest in baseline.items():
            assert backend.snapshot(name)["hash"] == digest, lines
    assert backend.snapshot("big")["hash"] == snapshot_value(big_grid)["hash"]


# --- 7. one loop over the wire ---------------------------------------------------


class _Client:
    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer
        self._id = 0
        self.events: list[dict] = []

    async def call(self, method: str, **params) -> dict:
        self._id += 1
        self.writer.write(
            (json.dumps({"id": self._id, "method": method, "params": params}) + "\n").encode()
        )
        await self.writer.drain()
        while True:
            frame = json.loads(await self.reader.readline())
            if frame.get("id") == 0:
                self.events.append(frame["params"])
                continue
            assert frame["id"] == self._id and frame["ok"], frame
            return frame["result"]


def test_full_loop_over_the_wire_is_fast_ordered_and_persisted(tmp_path):
    persist = tmp_path / "notebook.json"
    started = time.monotonic()

    async def case():
        session = fresh_session("df = census()")
        session.run_notebook()
        server, nbs = await serve(session, persist_path=persist)
        port = server.sockets[0].getsockname()[1]
        c = _Client(*await asyncio.open_connection("127.0.0.1", port))
        await c.call("subscribe")

        def new_events_after(mark: int, method: str, **params):
            async def go():
                result = await c.call(method, **params)
                return result, [e["event"] for e in c.events[mark:]]

            return go()

        # each mutation's events arrive, in order, before its own response
        result, ev = await new_events_after(0, "add_cell", text="%%mage table df")
        cid = result["cell"]["id"]
        assert ev == ["cell-added"]

        mark = len(c.events)
        result, ev = await new_events_after(mark, "invoke", cell=cid)
        iid = result["instance"]["id"]
        assert ev[0] == "instance-created"

        mark = len(c.events)
        result, ev = await new_events_after(
            mark, "handoff", instance=iid, action="filter", data={"COL": "age", "EXPR": "< 65"}
        )
        assert ev[0] == "cell-changed" and "tool-notify" in ev

        mark = len(c.events)
        result, ev = await new_events_after(
            mark, "edit_cell", cell=cid, text="%%mage table df\ndf = df[df.age < 40]"
        )
        assert result["updated"] == [[1, {"DF": "df", "COL": "age", "EXPR": "< 40"}]]
        assert ev[0] == "cell-changed"

        mark = len(c.events)
        result, ev = await new_events_after(
            mark,
            "transfer_selection",
            instance=iid,
            selection={"predicates": [{"col": "sex", "op": "in", "values": ["Female"]}]},
            target="Show in table",
        )
        assert ev[:2] == ["cell-added", "instance-created"]
        assert result["instance"]["id"] != iid

        # what reached disk decodes to exactly the notebook in memory
        on_disk = load_notebook(persist.read_bytes())
        assert save_notebook(on_disk) == save_notebook(nbs.session.notebook)

        server.close()
        await server.wait_closed()

    asyncio.run(asyncio.wait_for(case(), timeout=10))
    assert time.monotonic() - started < 2.0


# --- 8. recognize inverts replay --------------------------------------------------


def test_recognize_inverts_replay_for_random_traces(tmp_path, capsys):
    """50 random traces: replay the handoffs, then read the written notebook
    back with the recognizer and recover the same actions and bindings."""
    rng = random.Random(707)
    for i in range(50):
        steps = random_table_steps(rng, rng.randrange(1, 7), no_adjacent_column_repeat=True)
        records = [
            {"op": "cell", "text": "df = census()"},
            {"op": "invoke", "tool": "table", "args": ["df"]},
        ] + [{"op": "handoff", "action": a, "data": d} for a, d in steps]
        trace = tmp_path / f"trace{i}.jsonl"
        trace.write_text("".join(json.dumps(r) + "\n" for r in records))
        out_nb = tmp_path / f"nb{i}.json"

        assert cli_main(["replay", "--trace", str(trace), "--notebook", str(out_nb)]) == 0
        capsys.readouterr()
        assert cli_main(["recognize", "--notebook", str(out_nb)]) == 0
        report = json.loads(capsys.readouterr().out)

        tool_cell = next(c for c in report["cells"] if c["id"] == "c2")
        assert tool_cell["unrecognized"] == []
        got = [(a["action"], a["bindings"]) for a in tool_cell["actions"]]
        assert got == [(a, {**d, "DF": "df"}) for a, d in steps]
