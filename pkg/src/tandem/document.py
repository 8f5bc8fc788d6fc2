"""Notebook document model with per-line provenance.

Every line is either engine-generated (tied to a tool instance, an action
sequence number, and the template that produced it), user-written, or frozen
user code.  The freeze rule is deliberately conservative: once an edit leaves
a line the engine cannot recognize, everything above it in the writable
region is treated as untouchable user code from then on, and new generated
code is inserted after it.

Reconciling an edit works on a full replacement of the cell text.  Lines are
aligned by longest common subsequence on exact text; unchanged lines keep
their provenance, changed or added lines are run through the recognizers, and
deleted generated lines surface as removed actions (undo-by-deletion).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .errors import (
    FrozenInWritable,
    InvocationLineModified,
    MalformedDocument,
    NoInvocation,
    NonIdentifierArgument,
    NotAnInvocation,
    VersionMismatch,
)
from .templates import (
    BindingSet,
    Recognizer,
    TemplateSpec,
    instantiate,
    recognize_line,
)

NOTEBOOK_VERSION = 1
MAGIC = "%%mage"

__all__ = [
    "Generated",
    "User",
    "FrozenUser",
    "USER",
    "FROZEN",
    "Provenance",
    "LineRecord",
    "Cell",
    "Notebook",
    "Invocation",
    "ReconcileReport",
    "parse_invocation",
    "make_invocation_line",
    "writable_region",
    "insert_generated",
    "reconcile_edit",
    "rewrite_writable",
    "cell_text",
    "cell_to_json",
    "save_notebook",
    "load_notebook",
]


@dataclass(frozen=True)
class Generated:
    tool_instance_id: str
    action_seq: int
    template_id: str


@dataclass(frozen=True)
class User:
    pass


@dataclass(frozen=True)
class FrozenUser:
    pass


USER = User()
FROZEN = FrozenUser()

Provenance = Generated | User | FrozenUser


@dataclass(frozen=True)
class LineRecord:
    text: str
    prov: Provenance = USER

    def __post_init__(self):
        if "\n" in self.text:
            raise MalformedDocument("line text contains a newline")


@dataclass(frozen=True)
class Cell:
    cell_id: str
    lines: tuple[LineRecord, ...] = ()

    def invocation(self) -> "Invocation | None":
        if self.lines:
            try:
                return parse_invocation(self.lines[0].text)
            except (NotAnInvocation, NonIdentifierArgument):
                return None
        return None


@dataclass(frozen=True)
class Notebook:
    cells: tuple[Cell, ...] = ()
    version: int = NOTEBOOK_VERSION

    def cell(self, cell_id: str) -> Cell | None:
        for c in self.cells:
            if c.cell_id == cell_id:
                return c
        return None

    def with_cell(self, cell: Cell) -> "Notebook":
        return replace(
            self,
            cells=tuple(cell if c.cell_id == cell.cell_id else c for c in self.cells),
        )


@dataclass(frozen=True)
class Invocation:
    tool_name: str
    arg_idents: tuple[str, ...]


def _is_ident(s: str) -> bool:
    return s.isidentifier()


def parse_invocation(line0: str) -> Invocation:
    """Parse the engine-owned invocation line ``%%mage <tool> <ident>...``."""
    parts = line0.split()
    if not line0.startswith(MAGIC) or not parts or parts[0] != MAGIC:
        raise NotAnInvocation(f"not an invocation line: {line0!r}")
    if len(parts) < 2 or not _is_ident(parts[1]):
        raise NotAnInvocation(f"invocation needs a tool name: {line0!r}")
    for arg in parts[2:]:
        if not _is_ident(arg):
            raise NonIdentifierArgument(f"invocation argument {arg!r} is not an identifier")
    return Invocation(parts[1], tuple(parts[2:]))


def make_invocation_line(tool_name: str, args: tuple[str, ...] | list[str]) -> str:
    return " ".join([MAGIC, tool_name, *args])


def writable_region(cell: Cell) -> tuple[int, int]:
    """The maximal trailing run of Generated lines, as a half-open span.

    The span never includes line 0 when the cell carries an invocation; when
    the cell has no trailing generated lines the span is empty and sits at
    the end of the cell (which is where new generated code goes).
    """
    floor = 1 if cell.invocation() is not None else 0
    end = len(cell.lines)
    start = end
    while start > floor and isinstance(cell.lines[start - 1].prov, Generated):
        start -= 1
    return start, end


def insert_generated(cell: Cell, text: str, prov: Generated) -> Cell:
    """Append a generated line at the end of the writable region."""
    if cell.invocation() is None:
        raise NoInvocation(f"cell {cell.cell_id!r} has no invocation line")
    for ln in cell.lines:
        if (
            isinstance(ln.prov, Generated)
            and ln.prov.tool_instance_id == prov.tool_instance_id
            and ln.prov.action_seq >= prov.action_seq
        ):
            raise ValueError(
                f"action_seq {prov.action_seq} is not strictly increasing "
                f"for instance {prov.tool_instance_id!r}"
            )
    _, end = writable_region(cell)
    lines = list(cell.lines)
    lines.insert(end, LineRecord(text, prov))
    return replace(cell, lines=tuple(lines))


@dataclass
class ReconcileReport:
    updated_actions: list[tuple[int, BindingSet]] = field(default_factory=list)
    removed_actions: list[int] = field(default_factory=list)
    new_freeze_boundary: int | None = None
    refresh_only: bool = False

    def empty(self) -> bool:
        return (
            not self.updated_actions
            and not self.removed_actions
            and self.new_freeze_boundary is None
            and not self.refresh_only
        )


def _lcs_pairs(a: list[str], b: list[str]) -> list[tuple[int, int]]:
    """Longest common subsequence on exact text, as matched index pairs."""
    n, m = len(a), len(b)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, nxt = dp[i], dp[i + 1]
        for j in range(m - 1, -1, -1):
            row[j] = nxt[j + 1] + 1 if a[i] == b[j] else max(nxt[j], row[j + 1])
    pairs = []
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


def _split_edit_text(new_text: str) -> list[str]:
    lines = new_text.split("\n")
    while lines and not lines[-1].strip():
        lines.pop()  # trailing blank lines are cosmetic, never part of the document
    return lines


def _max_seq(lines: tuple[LineRecord, ...] | list[LineRecord]) -> int:
    seqs = [ln.prov.action_seq for ln in lines if isinstance(ln.prov, Generated)]
    return max(seqs, default=0)


def _derive_instance(lines: tuple[LineRecord, ...]) -> str | None:
    for ln in lines:
        if isinstance(ln.prov, Generated):
            return ln.prov.tool_instance_id
    return None


def reconcile_edit(
    cell: Cell,
    new_text: str,
    recognizers: list[Recognizer],
    *,
    instance_id: str | None = None,
) -> tuple[Cell, ReconcileReport]:
    """Adopt a full-text replacement of the cell, reporting what it meant.

    Raises InvocationLineModified when the cell has an invocation and the
    edit touches line 0 (the invocation line is engine-owned); the document
    is left as it was.
    """
    old_lines = cell.lines
    old_texts = [ln.text for ln in old_lines]
    new_texts = _split_edit_text(new_text)

    if cell.invocation() is not None:
        if not new_texts or new_texts[0] != old_texts[0]:
            raise InvocationLineModified(
                f"cell {cell.cell_id!r}: the invocation line cannot be edited"
            )

    report = ReconcileReport()
    if new_texts == old_texts:
        return cell, report

    if instance_id is None:
        instance_id = _derive_instance(old_lines)

    ws, _ = writable_region(cell)
    pairs = _lcs_pairs(old_texts, new_texts)

    new_recs: list[LineRecord | None] = [None] * len(new_texts)
    origin: list[int | None] = [None] * len(new_texts)
    promoted: list[int] = []  # new indices recognized without an old action
    unrecognized: list[int] = []  # new indices of changed/added lines of real code

    for i, j in pairs:
        new_recs[j] = old_lines[i]
        origin[j] = i

    next_seq = _max_seq(old_lines) + 1

    def process_run(old_run: list[int], new_run: list[int]) -> None:
        nonlocal next_seq
        matches = {j: recognize_line(recognizers, new_texts[j]) for j in new_run}
        free_old = list(old_run)
        # recognized lines first claim the old action with the same template
        for j in new_run:
            m = matches[j]
            if m is None:
                continue
            tid, bindings = m
            for i in free_old:
                prov = old_lines[i].prov
                if isinstance(prov, Generated) and prov.template_id == tid:
                    free_old.remove(i)
                    origin[j] = i
                    new_recs[j] = LineRecord(new_texts[j], prov)
                    old_m = recognize_line(recognizers, old_lines[i].text)
                    if old_m is None or old_m[1] != bindings:
                        report.updated_actions.append((prov.action_seq, bindings))
                    break
        # remaining lines pair positionally with the remaining old lines
        rest_new = [j for j in new_run if new_recs[j] is None]
        for k, j in enumerate(rest_new):
            old_i = free_old[k] if k < len(free_old) else None
            m = matches[j]
            old_prov = old_lines[old_i].prov if old_i is not None else None
            if isinstance(old_prov, FrozenUser):
                # frozen text stays frozen no matter what it was edited into
                new_recs[j] = LineRecord(new_texts[j], FROZEN)
                continue
            if m is not None:
                if isinstance(old_prov, Generated):
                    # recognized as a different template: old action removed,
                    # new recognized action added
                    report.removed_actions.append(old_prov.action_seq)
                if instance_id is not None:
                    tid, bindings = m
                    prov = Generated(instance_id, next_seq, tid)
                    next_seq += 1
                    new_recs[j] = LineRecord(new_texts[j], prov)
                    promoted.append(j)
                    report.updated_actions.append((prov.action_seq, bindings))
                else:
                    new_recs[j] = LineRecord(new_texts[j], USER)
                continue
            # no recognizer match; blank lines are cosmetic, not code
            new_recs[j] = LineRecord(new_texts[j], USER)
            if new_texts[j].strip():
                unrecognized.append(j)
        # deleted generated lines are undone actions
        for i in free_old[len(rest_new):]:
            prov = old_lines[i].prov
            if isinstance(prov, Generated):
                report.removed_actions.append(prov.action_seq)

    prev_i, prev_j = -1, -1
    for i, j in pairs + [(len(old_texts), len(new_texts))]:
        old_run = list(range(prev_i + 1, i))
        new_run = list(range(prev_j + 1, j))
        if old_run or new_run:
            process_run(old_run, new_run)
        prev_i, prev_j = i, j

    if unrecognized:
        report.refresh_only = True
        boundary = max(unrecognized)
        report.new_freeze_boundary = boundary
        dropped_updates: set[int] = set()
        for j in range(boundary):
            rec = new_recs[j]
            if rec is None or not isinstance(rec.prov, Generated):
                continue
            came_from_writable = origin[j] is None or origin[j] >= ws
            if not came_from_writable:
                continue
            # everything above the unrecognized line is untouchable now
            new_recs[j] = LineRecord(rec.text, FROZEN)
            dropped_updates.add(rec.prov.action_seq)
            if j not in promoted:
                # an action recognized and frozen within the same edit never
                # existed as far as the tool is concerned; a pre-existing one
                # is gone for good
                report.removed_actions.append(rec.prov.action_seq)
        if dropped_updates:
            report.updated_actions = [
                (seq, b) for seq, b in report.updated_actions if seq not in dropped_updates
            ]

    assert all(rec is not None for rec in new_recs)
    new_cell = replace(cell, lines=tuple(new_recs))
    return new_cell, report


def rewrite_writable(
    cell: Cell,
    final_templates: list[tuple[TemplateSpec, BindingSet]],
    *,
    instance_id: str | None = None,
    start_seq: int | None = None,
) -> Cell:
    """Replace the writable region with fresh instantiations of the given
    templates, renumbering action sequence numbers monotonically."""
    ws, we = writable_region(cell)
    for ln in cell.lines[ws:we]:
        if isinstance(ln.prov, FrozenUser):
            raise FrozenInWritable("writable region contains a frozen line")
    if instance_id is None:
        instance_id = _derive_instance(cell.lines)
    if instance_id is None:
        raise NoInvocation(f"cell {cell.cell_id!r} has no tool instance to rewrite for")
    seq = start_seq if start_seq is not None else _max_seq(cell.lines) + 1
    new_lines = list(cell.lines[:ws])
    for template, bindings in final_templates:
        new_lines.append(
            LineRecord(
                instantiate(template, bindings),
                Generated(instance_id, seq, template.template_id),
            )
        )
        seq += 1
    return replace(cell, lines=tuple(new_lines))


def cell_text(cell: Cell) -> str:
    return "\n".join(ln.text for ln in cell.lines)


# --- persistence ----------------------------------------------------------------


def _prov_to_json(prov: Provenance) -> dict:
    if isinstance(prov, Generated):
        return {
            "kind": "generated",
            "tool": prov.tool_instance_id,
            "seq": prov.action_seq,
            "template": prov.template_id,
        }
    if isinstance(prov, FrozenUser):
        return {"kind": "frozen"}
    return {"kind": "user"}


def _prov_from_json(obj) -> Provenance:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise MalformedDocument(f"bad provenance: {obj!r}")
    kind = obj["kind"]
    if kind == "user":
        return USER
    if kind == "frozen":
        return FROZEN
    if kind == "generated":
        try:
            return Generated(obj["tool"], int(obj["seq"]), obj["template"])
        except (KeyError, TypeError, ValueError):
            raise MalformedDocument(f"bad generated provenance: {obj!r}") from None
    raise MalformedDocument(f"unknown provenance kind: {kind!r}")


def cell_to_json(cell: Cell) -> dict:
    return {
        "id": cell.cell_id,
        "lines": [{"text": ln.text, "prov": _prov_to_json(ln.prov)} for ln in cell.lines],
    }


def save_notebook(nb: Notebook) -> bytes:
    doc = {"version": nb.version, "cells": [cell_to_json(c) for c in nb.cells]}
    return (json.dumps(doc, indent=1) + "\n").encode()


def load_notebook(data: bytes) -> Notebook:
    try:
        doc = json.loads(data.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedDocument(f"not a notebook file: {exc}") from None
    if not isinstance(doc, dict) or "version" not in doc:
        raise MalformedDocument("missing version")
    if doc["version"] != NOTEBOOK_VERSION:
        raise VersionMismatch(f"unsupported notebook version {doc['version']!r}")
    if not isinstance(doc.get("cells"), list):
        raise MalformedDocument("missing cells")
    cells = []
    seen: set[str] = set()
    for c in doc["cells"]:
        if not isinstance(c, dict) or not isinstance(c.get("id"), str):
            raise MalformedDocument(f"bad cell: {c!r}")
        if c["id"] in seen:
            raise MalformedDocument(f"duplicate cell id {c['id']!r}")
        seen.add(c["id"])
        lines = []
        for ln in c.get("lines", []):
            if not isinstance(ln, dict) or not isinstance(ln.get("text"), str):
                raise MalformedDocument(f"bad line: {ln!r}")
            lines.append(LineRecord(ln["text"], _prov_from_json(ln.get("prov"))))
        cells.append(Cell(c["id"], tuple(lines)))
    return Notebook(tuple(cells))
