"""Canonical tools: table, plotlite, slider, grid.

The interesting part is the table tool's compactor.  Instead of letting every
click append a line, a table instance folds its action history into an
ordered state dict and rewrites the cell from it, so dragging a column around
five times still reads as one ``move_col`` line.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .session import (
    ParamSpec,
    SelectionTarget,
    ToolRegistration,
    ToolRegistry,
)
from .templates import BindingSet

__all__ = [
    "TableCompactor",
    "builtin_pack_texts",
    "read_pack_dir",
    "canonical_registry",
    "SELECTION_ACTIONS",
]

SELECTION_ACTIONS = ("sel-slice", "sel-in-1", "sel-in-2", "sel-in-3", "sel-in-4")

_COLUMN_ACTIONS = {"insert-column", "move-column", "drop-column"}


def _fresh_key(state: dict[str, dict], base: str) -> str:
    n = 1
    while f"{base}#{n}" in state:
        n += 1
    return f"{base}#{n}"


def _key_base(key: str) -> str:
    return key.rsplit("#", 1)[0]


def _column_of(bindings: BindingSet) -> str:
    name = bindings["NAME"]
    return name[1:-1] if name.startswith('"') else name


class TableCompactor:
    """Fold repeated column manipulations; keep every filter and sort.

    Entries stay in insertion order and only the most recent entry is ever
    folded into, so each fold is a rewrite of two *adjacent* generated lines
    with identical meaning:

        insert(c) at i ; move(c) to j   ==  insert(c) at j
        move(c) to i ; move(c) to j     ==  move(c) to j
        insert(c) at i ; drop(c)        ==  (nothing)
        move(c) to i ; drop(c)          ==  drop(c)

    A same-column action that is *not* adjacent to its predecessor appends a
    fresh entry instead, because folding across an intervening line could
    reorder operations that do not commute.
    """

    def update(self, state: dict[str, dict], action_name: str, bindings: BindingSet) -> None:
        if action_name not in _COLUMN_ACTIONS:
            base = {"filter": "filter", "sort-column": "sort"}.get(action_name, action_name)
            state[_fresh_key(state, base)] = {"action": action_name, "bindings": dict(bindings)}
            return

        base = f"col:{_column_of(bindings)}"
        last_key = next(reversed(state), None)
        if last_key is not None and _key_base(last_key) == base:
            last = state[last_key]
            prev = last["action"]
            if action_name == "move-column":
                if prev == "insert-column":
                    last["bindings"]["IDX"] = bindings["IDX"]
                    return
                if prev == "move-column":
                    last["bindings"] = dict(bindings)
                    return
            elif action_name == "drop-column":
                if prev == "insert-column":
                    del state[last_key]
                    return
                if prev == "move-column":
                    state[last_key] = {"action": "drop-column", "bindings": dict(bindings)}
                    return
        state[_fresh_key(state, base)] = {"action": action_name, "bindings": dict(bindings)}

    def final_actions(self, state: dict[str, dict]) -> list[tuple[str, BindingSet]]:
        return [(e["action"], dict(e["bindings"])) for e in state.values()]


def builtin_pack_texts() -> list[str]:
    pkg = resources.files("tandem").joinpath("packs")
    return [
        pkg.joinpath("minitable.pack").read_text(),
        pkg.joinpath("dataframe.pack").read_text(),
    ]


def read_pack_dir(path: str | Path) -> list[str]:
    """All ``*.pack`` files under a directory, in name order."""
    return [p.read_text() for p in sorted(Path(path).glob("*.pack"))]


def canonical_registry(extra_pack_texts: list[str] | None = None) -> ToolRegistry:
    """The shipped tools over the shipped packs, plus any extra packs."""
    registry = ToolRegistry()
    for text in builtin_pack_texts():
        registry.add_pack(text)
    for text in extra_pack_texts or []:
        registry.add_pack(text)

    targets = (
        SelectionTarget("Show in table", "table"),
        SelectionTarget("Selection code", None),
    )
    registry.register_tool(
        ToolRegistration(
            name="table",
            params=(ParamSpec("data", ("table",)),),
            view_id="table",
            actions=("filter", "insert-column", "move-column", "drop-column", "sort-column"),
            hosts=SELECTION_ACTIONS,
            selection_targets=targets,
            compactor=TableCompactor(),
        )
    )
    registry.register_tool(
        ToolRegistration(
            name="plotlite",
            params=(ParamSpec("data", ("table",)),),
            view_id="plotlite",
            selection_targets=targets,
        )
    )
    registry.register_tool(
        ToolRegistration(
            name="slider",
            params=(ParamSpec("value", ("num",)),),
            view_id="slider",
            actions=("slider-set",),
        )
    )
    registry.register_tool(
        ToolRegistration(
            name="grid",
            params=(ParamSpec("image", ("grid",)),),
            view_id="grid",
            actions=("crop",),
        )
    )
    return registry
