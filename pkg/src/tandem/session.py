"""Tool registry and the session that keeps views and code in lockstep.

A session owns one notebook, one executor backend, and the set of live tool
instances.  Every mutation funnels through here: invoking a tool on a cell,
handing a GUI action off into generated code, reconciling a user's edit of
that code, and turning a view selection into a new cell.  All of them leave
the backend holding the environment produced by the current notebook text,
so the views and the code can never silently disagree.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Protocol, runtime_checkable

from .document import (
    Cell,
    Generated,
    LineRecord,
    Notebook,
    ReconcileReport,
    User,
    insert_generated,
    make_invocation_line,
    reconcile_edit,
    rewrite_writable,
    writable_region,
)
from .errors import (
    ArityMismatch,
    DuplicateTool,
    EmptySelection,
    ExecutionFailed,
    InstanceExists,
    InvalidPack,
    TypeCheckFailed,
    UnboundVariable,
    UnknownAction,
    UnknownCell,
    UnknownInstance,
    UnknownPreprocess,
    UnknownTarget,
    UnknownTool,
    UnsupportedSelection,
)
from .executor import ExecutionResult, ExecutorBackend, execute_prefix
from .minitable import format_number
from .templates import (
    BindingSet,
    BlankSource,
    Recognizer,
    TemplateSpec,
    TemplateVariantSet,
    compile_recognizer,
    instantiate,
    parse_pack,
    recognize_line,
    select_variant,
)

__all__ = [
    "ParamSpec",
    "SelectionTarget",
    "Preprocess",
    "Compactor",
    "ToolRegistration",
    "ToolRegistry",
    "ToolInstance",
    "ToolNotification",
    "HandoffResult",
    "EditResult",
    "TransferResult",
    "Session",
]


# --- registry ---------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSpec:
    """One invocation argument: its name and the snapshot types it accepts."""

    name: str
    accepted: tuple[str, ...]


@dataclass(frozen=True)
class SelectionTarget:
    """A destination offered for a view selection.

    ``tool_name`` names the tool to auto-invoke on the new cell; None means
    the selection lands as bare code with no view attached.
    """

    label: str
    tool_name: str | None = None


@dataclass(frozen=True)
class Preprocess:
    """A named, dialect-keyed code fragment run on a sandboxed copy at invoke
    time; ``$VAR`` stands for the displayed variable."""

    preprocess_id: str
    code_by_dialect: Mapping[str, str]


@runtime_checkable
class Compactor(Protocol):
    """Per-tool folding of repeated actions into a canonical rewrite.

    ``update`` mutates the ordered state dict in place; ``final_actions``
    lists the (action, bindings) pairs to emit, in entry order.
    """

    def update(self, state: dict[str, dict], action_name: str, bindings: BindingSet) -> None: ...

    def final_actions(self, state: dict[str, dict]) -> list[tuple[str, BindingSet]]: ...


@dataclass(frozen=True)
class ToolRegistration:
    name: str
    params: tuple[ParamSpec, ...]
    view_id: str
    actions: tuple[str, ...] = ()
    # Extra action shapes this tool's cells may contain and must keep
    # recognizing (e.g. the selection shapes in a transferred cell), even
    # though they are never offered through handoff.
    hosts: tuple[str, ...] = ()
    selection_targets: tuple[SelectionTarget, ...] = ()
    preprocess_id: str | None = None
    compactor: Compactor | None = None


class ToolRegistry:
    """Template packs plus tool registrations, with recognizer compilation.

    Declaration order is preserved across packs: it is the recognizer
    tie-break order, so packs should declare more specific shapes first.
    """

    def __init__(self) -> None:
        self.templates: list[TemplateSpec] = []
        self.variant_sets: dict[str, TemplateVariantSet] = {}
        self.template_by_id: dict[str, TemplateSpec] = {}
        self.tools: dict[str, ToolRegistration] = {}
        self.preprocesses: dict[str, Preprocess] = {}
        self._recognizers: dict[tuple[str, str], list[Recognizer]] = {}

    def add_pack(self, text: str) -> None:
        templates, vartypes = parse_pack(text)
        for t in templates:
            if t.template_id in self.template_by_id:
                raise InvalidPack(f"duplicate template id {t.template_id!r}")
            vs = self.variant_sets.get(t.action_name)
            if vs is None:
                vs = TemplateVariantSet(t.action_name, vartypes[t.action_name])
                self.variant_sets[t.action_name] = vs
            elif vs.required_var_type != vartypes[t.action_name]:
                raise InvalidPack(
                    f"action {t.action_name!r} declared for variable type "
                    f"{vartypes[t.action_name]!r} but already registered for "
                    f"{vs.required_var_type!r}"
                )
            for prior in vs.variants:
                if prior.dialect == t.dialect:
                    raise InvalidPack(
                        f"action {t.action_name!r} already has a {t.dialect!r} variant"
                    )
            vs.variants.append(t)
            self.templates.append(t)
            self.template_by_id[t.template_id] = t
        self._recognizers.clear()

    def register_preprocess(self, pre: Preprocess) -> None:
        self.preprocesses[pre.preprocess_id] = pre

    def register_tool(self, reg: ToolRegistration) -> None:
        if reg.name in self.tools:
            raise DuplicateTool(f"tool {reg.name!r} is already registered")
        for action in (*reg.actions, *reg.hosts):
            vs = self.variant_sets.get(action)
            if vs is None or not vs.variants:
                raise InvalidPack(
                    f"tool {reg.name!r} needs action {action!r}, which has no templates"
                )
        for target in reg.selection_targets:
            known = target.tool_name is None or target.tool_name in self.tools
            if not known and target.tool_name != reg.name:  # self-reference is fine
                raise UnknownTool(
                    f"selection target {target.label!r} points at unknown tool "
                    f"{target.tool_name!r}"
                )
        if reg.preprocess_id is not None and reg.preprocess_id not in self.preprocesses:
            raise UnknownPreprocess(f"no preprocess {reg.preprocess_id!r}")
        self.tools[reg.name] = reg

    def recognizers_for(self, tool_name: str, dialect: str) -> list[Recognizer]:
        """Recognizers for one tool's cells: its actions plus hosted shapes,
        in pack declaration order, restricted to the session dialect."""
        key = (tool_name, dialect)
        cached = self._recognizers.get(key)
        if cached is None:
            reg = self.tools[tool_name]
            wanted = set(reg.actions) | set(reg.hosts)
            cached = [
                compile_recognizer(t)
                for t in self.templates
                if t.action_name in wanted and t.dialect == dialect
            ]
            self._recognizers[key] = cached
        return cached

    def all_recognizers(self, dialect: str) -> list[Recognizer]:
        key = ("*", dialect)
        cached = self._recognizers.get(key)
        if cached is None:
            cached = [compile_recognizer(t) for t in self.templates if t.dialect == dialect]
            self._recognizers[key] = cached
        return cached


# --- session ----------------------------------------------------------------------


@dataclass
class ToolInstance:
    instance_id: str
    tool_name: str
    cell_id: str
    view_id: str
    displayed_var: str | None
    state_dict: dict[str, dict] | None = None
    last_snapshot: dict | None = None


@dataclass(frozen=True)
class ToolNotification:
    instance_id: str
    payload: dict


@dataclass
class HandoffResult:
    cell: Cell
    snapshot: dict
    notifications: list[ToolNotification]


@dataclass
class EditResult:
    cell: Cell
    report: ReconcileReport
    notifications: list[ToolNotification]
    execution: ExecutionResult | None  # None when the edit was purely cosmetic


@dataclass
class TransferResult:
    cell: Cell
    instance: ToolInstance | None
    notifications: list[ToolNotification]


_COMPARISONS = ("<", "<=", ">", ">=", "==", "!=")


def _surface(value) -> str:
    """Render a JSON-ish selection value in the code dialect's surface syntax."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return format_number(value)
    if isinstance(value, str):
        if '"' in value or "\\" in value:
            raise UnsupportedSelection(f"cannot quote {value!r} in generated code")
        return f'"{value}"'
    raise UnsupportedSelection(f"selection value {value!r} has no code form")


def _column_surface(col) -> str:
    # selection shapes name the column in attribute position, which only
    # admits identifiers
    if not isinstance(col, str) or not col.isidentifier():
        raise UnsupportedSelection(f"column {col!r} has no code form")
    return col


class Session:
    """One notebook, one backend, and the live tool instances over them."""

    def __init__(self, notebook: Notebook, registry: ToolRegistry, backend: ExecutorBackend):
        self.notebook = notebook
        self.registry = registry
        self.backend = backend
        self.dialect = backend.dialect
        self.instances: dict[str, ToolInstance] = {}
        self._by_cell: dict[str, str] = {}
        self._next_seq: dict[str, int] = {}
        self._instance_n = 1
        self._sel_n = 1
        self._cell_n = 1 + max(
            (
                int(c.cell_id[1:])
                for c in notebook.cells
                if c.cell_id.startswith("c") and c.cell_id[1:].isdigit()
            ),
            default=0,
        )

    # -- notebook construction helpers --

    def new_cell_id(self) -> str:
        cid = f"c{self._cell_n}"
        self._cell_n += 1
        return cid

    def add_cell(self, text: str = "", *, index: int | None = None) -> Cell:
        lines = tuple(LineRecord(ln, User()) for ln in text.split("\n")) if text else ()
        cell = Cell(self.new_cell_id(), lines)
        cells = list(self.notebook.cells)
        cells.insert(len(cells) if index is None else index, cell)
        self.notebook = replace(self.notebook, cells=tuple(cells))
        return cell

    def add_invocation_cell(
        self, tool_name: str, args: list[str] | tuple[str, ...], *, index: int | None = None
    ) -> Cell:
        return self.add_cell(make_invocation_line(tool_name, tuple(args)), index=index)

    def _cell(self, cell_id: str) -> Cell:
        cell = self.notebook.cell(cell_id)
        if cell is None:
            raise UnknownCell(f"no cell {cell_id!r}")
        return cell

    def _cell_index(self, nb: Notebook, cell_id: str | None) -> int:
        for i, c in enumerate(nb.cells):
            if c.cell_id == cell_id:
                return i
        return -1

    def _instance(self, instance_id: str) -> ToolInstance:
        inst = self.instances.get(instance_id)
        if inst is None:
            raise UnknownInstance(f"no tool instance {instance_id!r}")
        return inst

    # -- execution plumbing --

    def run_notebook(self) -> ExecutionResult:
        """Execute the committed notebook end to end (best effort: a failure
        in some cell is reported, not raised, and earlier cells stay run)."""
        return execute_prefix(self.notebook, self.backend)

    def _run_or_rollback(self, candidate: Notebook, through_cell_id: str) -> ExecutionResult:
        """Execute ``candidate`` fully; commit if everything up to and
        including ``through_cell_id`` ran, else restore the old state."""
        result = execute_prefix(candidate, self.backend)
        if not result.ok:
            failed_at = self._cell_index(candidate, result.cell_id)
            if failed_at <= self._cell_index(candidate, through_cell_id):
                self.run_notebook()  # put the environment back
                raise ExecutionFailed(
                    f"cell {result.cell_id}, line {result.line}: {result.error}"
                )
        self.notebook = candidate
        return result

    def _refresh_notifications(self, *, force: str | None = None) -> list[ToolNotification]:
        """data-refresh for every instance whose displayed value changed.

        ``force`` names an instance that gets a refresh even if its value
        hash is unchanged (the conservative fallback after an opaque edit).
        """
        notes = []
        for inst in self.instances.values():
            if inst.displayed_var is None:
                continue
            try:
                snap = self.backend.snapshot(inst.displayed_var)
            except UnboundVariable:
                continue
            changed = inst.last_snapshot is None or snap["hash"] != inst.last_snapshot["hash"]
            if changed or inst.instance_id == force:
                inst.last_snapshot = snap
                notes.append(
                    ToolNotification(inst.instance_id, {"kind": "data-refresh", "snapshot": snap})
                )
        return notes

    # -- invoke --

    def invoke_tool(self, cell_id: str) -> tuple[ToolInstance, list[ToolNotification]]:
        cell = self._cell(cell_id)
        inv = cell.invocation()
        if inv is None:
            raise UnknownCell(f"cell {cell_id!r} has no invocation line")
        reg = self.registry.tools.get(inv.tool_name)
        if reg is None:
            raise UnknownTool(f"no tool {inv.tool_name!r}")
        if cell_id in self._by_cell:
            raise InstanceExists(
                f"cell {cell_id!r} already hosts instance {self._by_cell[cell_id]!r}"
            )
        if len(inv.arg_idents) != len(reg.params):
            raise ArityMismatch(
                f"{reg.name} takes {len(reg.params)} argument(s), got {len(inv.arg_idents)}"
            )

        result = execute_prefix(self.notebook, self.backend, cell_id)
        if not result.ok:
            raise ExecutionFailed(f"cell {result.cell_id}, line {result.line}: {result.error}")

        snaps: dict[str, dict] = {}
        for param, arg in zip(reg.params, inv.arg_idents):
            try:
                snap = self.backend.snapshot(arg)
            except UnboundVariable as exc:
                raise ExecutionFailed(str(exc)) from None
            if snap["type"] not in param.accepted:
                raise TypeCheckFailed(
                    f"argument {arg!r} has type {snap['type']!r}",
                    tool_message=(
                        f"{reg.name} cannot display {arg!r}: parameter "
                        f"{param.name!r} takes {' or '.join(param.accepted)}, "
                        f"not {snap['type']}"
                    ),
                )
            snaps[arg] = snap

        displayed = inv.arg_idents[0] if inv.arg_idents else None
        payload = snaps.get(displayed) if displayed else None
        if reg.preprocess_id is not None and displayed is not None:
            pre = self.registry.preprocesses[reg.preprocess_id]
            code = pre.code_by_dialect.get(self.dialect)
            if code is None:
                raise UnknownPreprocess(
                    f"preprocess {pre.preprocess_id!r} has no {self.dialect!r} form"
                )
            pre_result, pre_snaps = self.backend.exec_sandbox(
                code.replace("$VAR", displayed), [displayed]
            )
            if not pre_result.ok or displayed not in pre_snaps:
                raise ExecutionFailed(f"preprocess {pre.preprocess_id!r}: {pre_result.error}")
            payload = pre_snaps[displayed]

        inst = ToolInstance(
            instance_id=f"i{self._instance_n}",
            tool_name=reg.name,
            cell_id=cell_id,
            view_id=reg.view_id,
            displayed_var=displayed,
            state_dict={} if reg.compactor is not None else None,
            last_snapshot=payload,
        )
        self._instance_n += 1
        self.instances[inst.instance_id] = inst
        self._by_cell[cell_id] = inst.instance_id
        # the cell may already hold generated lines (a transferred selection
        # lands before its tool is invoked); adopt them as history
        self._next_seq[inst.instance_id] = 1 + max(
            (ln.prov.action_seq for ln in cell.lines if isinstance(ln.prov, Generated)),
            default=0,
        )
        self._rebuild_state(inst, cell)
        notes = []
        if payload is not None:
            notes.append(
                ToolNotification(inst.instance_id, {"kind": "data-refresh", "snapshot": payload})
            )
        return inst, notes

    # -- handoff --

    def _resolve_bindings(
        self, template: TemplateSpec, action_data: BindingSet, displayed: str | None
    ) -> BindingSet:
        bindings = dict(action_data)
        for blank in template.blanks:
            if blank.source is BlankSource.ENV_RESOLVED:
                if displayed is None:
                    raise ExecutionFailed(
                        f"template {template.template_id!r} needs a displayed variable"
                    )
                bindings[blank.name] = displayed
        return bindings

    def _take_seq(self, instance_id: str, count: int = 1) -> int:
        start = self._next_seq.get(instance_id, 1)
        self._next_seq[instance_id] = start + count
        return start

    def handoff(
        self, instance_id: str, action_name: str, action_data: BindingSet
    ) -> HandoffResult:
        inst = self._instance(instance_id)
        reg = self.registry.tools[inst.tool_name]
        if action_name not in reg.actions:
            raise UnknownAction(f"tool {reg.name!r} has no action {action_name!r}")
        cell = self._cell(inst.cell_id)
        vs = self.registry.variant_sets[action_name]
        if inst.displayed_var is None:
            raise ExecutionFailed(f"instance {instance_id!r} displays no variable")
        try:
            var_type = self.backend.snapshot(inst.displayed_var)["type"]
        except UnboundVariable as exc:
            raise ExecutionFailed(str(exc)) from None

        if reg.compactor is not None:
            template = select_variant(vs, var_type, self.dialect)
            bindings = self._resolve_bindings(template, action_data, inst.displayed_var)
            instantiate(template, bindings)  # validate before touching state
            state = {k: dict(v) for k, v in (inst.state_dict or {}).items()}
            reg.compactor.update(state, action_name, bindings)
            finals = []
            for name, b in reg.compactor.final_actions(state):
                t = select_variant(self.registry.variant_sets[name], var_type, self.dialect)
                finals.append((t, b))
            start = self._next_seq.get(instance_id, 1)
            new_cell = rewrite_writable(
                cell, finals, instance_id=instance_id, start_seq=start
            )
        else:
            template = select_variant(vs, var_type, self.dialect)
            bindings = self._resolve_bindings(template, action_data, inst.displayed_var)
            line = instantiate(template, bindings)
            start = self._next_seq.get(instance_id, 1)
            new_cell = insert_generated(
                cell, line, Generated(instance_id, start, template.template_id)
            )
            state = None
            finals = [None]

        self._run_or_rollback(self.notebook.with_cell(new_cell), inst.cell_id)
        # committed: consume the sequence numbers and the folded state
        self._take_seq(instance_id, len(finals))
        if reg.compactor is not None:
            inst.state_dict = state
        notes = self._refresh_notifications(force=instance_id)
        if inst.last_snapshot is None:
            raise ExecutionFailed(
                f"variable {inst.displayed_var!r} vanished evaluating {action_name!r}"
            )
        return HandoffResult(new_cell, inst.last_snapshot, notes)

    # -- read back user edits --

    def _rebuild_state(self, inst: ToolInstance, cell: Cell) -> None:
        """Re-derive the folded action state from the writable region."""
        reg = self.registry.tools[inst.tool_name]
        if reg.compactor is None:
            return
        recognizers = self.registry.recognizers_for(inst.tool_name, self.dialect)
        state: dict[str, dict] = {}
        ws, we = writable_region(cell)
        for ln in cell.lines[ws:we]:
            hit = recognize_line(recognizers, ln.text)
            if hit is None:
                continue
            template_id, bindings = hit
            action = self.registry.template_by_id[template_id].action_name
            reg.compactor.update(state, action, bindings)
        inst.state_dict = state

    def on_code_edit(self, cell_id: str, new_text: str) -> EditResult:
        cell = self._cell(cell_id)
        inst = None
        recognizers: list[Recognizer] = []
        if cell_id in self._by_cell:
            inst = self.instances[self._by_cell[cell_id]]
            recognizers = self.registry.recognizers_for(inst.tool_name, self.dialect)

        new_cell, report = reconcile_edit(
            cell,
            new_text,
            recognizers,
            instance_id=inst.instance_id if inst else None,
        )
        self.notebook = self.notebook.with_cell(new_cell)

        notes: list[ToolNotification] = []
        if inst is not None:
            top = max(
                (
                    ln.prov.action_seq
                    for ln in new_cell.lines
                    if isinstance(ln.prov, Generated)
                ),
                default=0,
            )
            self._next_seq[inst.instance_id] = max(
                self._next_seq.get(inst.instance_id, 1), top + 1
            )
            self._rebuild_state(inst, new_cell)
            for seq, bindings in report.updated_actions:
                notes.append(
                    ToolNotification(
                        inst.instance_id,
                        {"kind": "binding-update", "seq": seq, "bindings": bindings},
                    )
                )
            for seq in report.removed_actions:
                notes.append(
                    ToolNotification(inst.instance_id, {"kind": "action-removed", "seq": seq})
                )

        if report.empty():
            return EditResult(new_cell, report, notes, None)

        execution = self.run_notebook()
        force = inst.instance_id if inst is not None and report.refresh_only else None
        notes.extend(self._refresh_notifications(force=force))
        return EditResult(new_cell, report, notes, execution)

    # -- reads --

    def get_variable(self, name: str) -> dict:
        return self.backend.snapshot(name)

    def _name_taken(self, name: str) -> bool:
        try:
            self.backend.snapshot(name)
            return True
        except UnboundVariable:
            return False

    # -- selections --

    def _selection_lines(
        self, predicates: list[dict], src: str, out: str, var_type: str
    ) -> list[tuple[TemplateSpec, BindingSet]]:
        lines = []
        base = src
        for pred in predicates:
            col = _column_surface(pred.get("col"))
            op = pred.get("op")
            if op == "in":
                values = pred.get("values") or []
                if not 1 <= len(values) <= 4:
                    raise UnsupportedSelection(
                        f"membership selections take 1-4 values, got {len(values)}"
                    )
                if not all(isinstance(v, str) for v in values):
                    raise UnsupportedSelection(
                        "membership selections take strings; spell numeric "
                        "selections as comparison predicates"
                    )
                action = f"sel-in-{len(values)}"
                bindings = {"OUT": out, "SRC": base, "COL": col}
                for i, v in enumerate(values, start=1):
                    bindings[f"V{i}"] = _surface(v)
            elif op in _COMPARISONS:
                action = "sel-slice"
                bindings = {
                    "OUT": out,
                    "SRC": base,
                    "COL": col,
                    "PRED": f"{op} {_surface(pred.get('value'))}",
                }
            else:
                raise UnsupportedSelection(f"selection operator {op!r} is not expressible")
            template = select_variant(
                self.registry.variant_sets[action], var_type, self.dialect
            )
            lines.append((template, bindings))
            base = out  # later predicates refine the selection, not the source
        return lines

    def transfer_selection(
        self, instance_id: str, selection: dict, target_label: str
    ) -> TransferResult:
        inst = self._instance(instance_id)
        reg = self.registry.tools[inst.tool_name]
        target = next(
            (t for t in reg.selection_targets if t.label == target_label), None
        )
        if target is None:
            raise UnknownTarget(f"tool {reg.name!r} has no selection target {target_label!r}")
        predicates = selection.get("predicates") if isinstance(selection, dict) else None
        if not predicates:
            raise EmptySelection("selection has no predicates")
        if inst.displayed_var is None:
            raise EmptySelection(f"instance {instance_id!r} displays no variable")
        try:
            var_type = self.backend.snapshot(inst.displayed_var)["type"]
        except UnboundVariable as exc:
            raise ExecutionFailed(str(exc)) from None
        if target.tool_name is not None:
            target_reg = self.registry.tools[target.tool_name]
            if len(target_reg.params) != 1 or var_type not in target_reg.params[0].accepted:
                raise UnsupportedSelection(
                    f"tool {target.tool_name!r} cannot display a {var_type} selection"
                )

        out = f"sel_{self._sel_n}"
        while self._name_taken(out):
            self._sel_n += 1
            out = f"sel_{self._sel_n}"
        self._sel_n += 1

        pairs = self._selection_lines(predicates, inst.displayed_var, out, var_type)

        cell_id = self.new_cell_id()
        lines: list[LineRecord] = []
        if target.tool_name is not None:
            lines.append(LineRecord(make_invocation_line(target.tool_name, (out,)), User()))
            owner = f"i{self._instance_n}"  # the instance invoke_tool will mint
            seq = 1
        else:
            owner = instance_id
            seq = self._take_seq(instance_id, len(pairs))
        for template, bindings in pairs:
            lines.append(
                LineRecord(
                    instantiate(template, bindings),
                    Generated(owner, seq, template.template_id),
                )
            )
            seq += 1

        cell = Cell(cell_id, tuple(lines))
        cells = list(self.notebook.cells)
        cells.insert(self._cell_index(self.notebook, inst.cell_id) + 1, cell)
        self._run_or_rollback(replace(self.notebook, cells=tuple(cells)), cell_id)

        new_instance = None
        notes: list[ToolNotification] = []
        if target.tool_name is not None:
            new_instance, notes = self.invoke_tool(cell_id)
        return TransferResult(cell, new_instance, notes)
