"""The built-in table dialect: a tiny deterministic statement language.

One statement per line, ``name = expr``, over immutable values: tables
(ordered columns of num/str/bool cells), 2-D numeric grids, and scalars.
Expressions cover exactly what the reference widgets generate: row filters,
column insert/move/drop, 2-D slices, literals, and builtin calls.  Evaluation
is pure — it returns a new environment and never mutates values in place.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Callable, Union

from .errors import (
    IndexOutOfRange,
    MiniTableError,
    MiniTableSyntax,
    MiniTableType,
    UnboundVariable,
    UnknownFunction,
)

Cell = Union[float, str, bool]


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple[Cell, ...], ...]

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise MiniTableType("duplicate column names")
        for r in self.rows:
            if len(r) != len(self.columns):
                raise MiniTableType("ragged table row")

    def col_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise MiniTableType(f"no such column: {name!r}") from None

    def column(self, name: str) -> tuple[Cell, ...]:
        i = self.col_index(name)
        return tuple(r[i] for r in self.rows)


@dataclass(frozen=True)
class Grid:
    cells: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        widths = {len(r) for r in self.cells}
        if len(widths) > 1:
            raise MiniTableType("ragged grid")

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.cells), len(self.cells[0]) if self.cells else 0)


Value = Union[Table, Grid, float, str, bool]


def type_of(value: Value) -> str:
    if isinstance(value, Table):
        return "table"
    if isinstance(value, Grid):
        return "grid"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, (int, float)):
        return "num"
    if isinstance(value, str):
        return "str"
    raise MiniTableType(f"not a value: {value!r}")


def format_number(x: float) -> str:
    """Render a num the way generated code spells it: 65.0 -> ``65``."""
    f = float(x)
    return str(int(f)) if f.is_integer() else repr(f)


def _canon_cell(c: Cell):
    if isinstance(c, bool) or isinstance(c, str):
        return c
    f = float(c)
    return int(f) if f.is_integer() else f


def canonical_body(value: Value):
    tag = type_of(value)
    if tag == "table":
        return {
            "columns": list(value.columns),
            "rows": [[_canon_cell(c) for c in r] for r in value.rows],
        }
    if tag == "grid":
        return [[_canon_cell(c) for c in r] for r in value.cells]
    if tag == "num":
        return _canon_cell(value)
    return value


def snapshot_value(value: Value) -> dict:
    """Canonical wire snapshot: ``{"type", "hash", "value"}``.

    The hash is sha256 over the canonical JSON of type tag plus body, so two
    backends that canonicalize alike produce byte-identical hashes.
    """
    body = canonical_body(value)
    tag = type_of(value)
    blob = json.dumps({"type": tag, "value": body}, sort_keys=True, separators=(",", ":"))
    return {"type": tag, "hash": hashlib.sha256(blob.encode()).hexdigest(), "value": body}


# --- parsing -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<number>-?(?:\d+\.\d*|\.\d+|\d+))
  | (?P<string>"[^"\\]*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|!=|[<>=\[\](),:.])
    """,
    re.VERBOSE,
)


def _tokens(line: str, lineno: int) -> list[tuple[str, str]]:
    out = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if not m:
            raise MiniTableSyntax(f"line {lineno}: bad character {line[pos]!r}")
        pos = m.end()
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group(0)))
    out.append(("eof", ""))
    return out


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Lit:
    value: Cell


@dataclass(frozen=True)
class Filter:
    base: str
    inner: str
    col: str
    op: str
    literal: Lit


@dataclass(frozen=True)
class FilterIn:
    base: str
    inner: str
    col: str
    values: tuple[Lit, ...]


@dataclass(frozen=True)
class Slice:
    base: str
    bounds: tuple[object, object, object, object]  # int or ident str


@dataclass(frozen=True)
class Insert:
    base: str
    index: int
    name: str
    values: tuple[Lit, ...]


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[object, ...]  # Var or Lit


Expr = Union[Var, Lit, Filter, FilterIn, Slice, Insert, Call]


@dataclass(frozen=True)
class Stmt:
    target: str
    expr: Expr
    line: int


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]], lineno: int):
        self.toks = tokens
        self.i = 0
        self.line = lineno

    def peek(self, ahead: int = 0) -> tuple[str, str]:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> tuple[str, str]:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind: str, text: str | None = None) -> str:
        k, v = self.next()
        if k != kind or (text is not None and v != text):
            raise MiniTableSyntax(
                f"line {self.line}: expected {text or kind}, got {v or 'end of line'!r}"
            )
        return v

    def fail(self, what: str):
        raise MiniTableSyntax(f"line {self.line}: {what}")

    # literal := NUMBER | STRING | true | false
    def literal(self) -> Lit:
        k, v = self.next()
        if k == "number":
            return Lit(float(v))
        if k == "string":
            return Lit(v[1:-1])
        if k == "name" and v in ("true", "false"):
            return Lit(v == "true")
        self.fail(f"expected a literal, got {v!r}")

    def literal_list(self) -> tuple[Lit, ...]:
        self.expect("op", "[")
        items = [self.literal()]
        while self.peek() == ("op", ","):
            self.next()
            items.append(self.literal())
        self.expect("op", "]")
        return tuple(items)

    def slice_bound(self):
        k, v = self.next()
        if k == "number":
            if "." in v or v.startswith("-"):
                self.fail(f"slice bound must be a non-negative integer, got {v!r}")
            return int(v)
        if k == "name":
            return v
        self.fail(f"expected slice bound, got {v!r}")

    def call_arg(self):
        k, v = self.peek()
        if k == "name" and v not in ("true", "false"):
            self.next()
            return Var(v)
        return self.literal()

    def expr(self) -> Expr:
        k, v = self.peek()
        if k in ("number", "string") or (k == "name" and v in ("true", "false")):
            return self.literal()
        if k != "name":
            self.fail(f"expected an expression, got {v!r}")
        name = self.next()[1]
        k2, v2 = self.peek()
        if (k2, v2) == ("op", "["):
            return self.bracketed(name)
        if (k2, v2) == ("op", "."):
            self.next()
            self.expect("name", "insert")
            self.expect("op", "(")
            idx_tok = self.next()
            if idx_tok[0] != "number" or "." in idx_tok[1] or idx_tok[1].startswith("-"):
                self.fail("insert index must be a non-negative integer")
            self.expect("op", ",")
            col_tok = self.next()
            if col_tok[0] != "string":
                self.fail("insert column name must be a string literal")
            self.expect("op", ",")
            values = self.literal_list()
            self.expect("op", ")")
            return Insert(name, int(idx_tok[1]), col_tok[1][1:-1], values)
        if (k2, v2) == ("op", "("):
            self.next()
            args: list[object] = []
            if self.peek() != ("op", ")"):
                args.append(self.call_arg())
                while self.peek() == ("op", ","):
                    self.next()
                    args.append(self.call_arg())
            self.expect("op", ")")
            return Call(name, tuple(args))
        return Var(name)

    def bracketed(self, base: str) -> Expr:
        self.expect("op", "[")
        k, v = self.peek()
        # filter starts `t[t.` ; anything else is a 2-D slice
        if k == "name" and self.peek(1) == ("op", "."):
            inner = self.next()[1]
            self.next()  # '.'
            col = self.expect("name")
            k3, v3 = self.next()
            if k3 == "op" and v3 in ("<", "<=", ">", ">=", "==", "!="):
                lit = self.literal()
                self.expect("op", "]")
                return Filter(base, inner, col, v3, lit)
            if (k3, v3) == ("name", "in"):
                values = self.literal_list()
                self.expect("op", "]")
                return FilterIn(base, inner, col, values)
            self.fail(f"expected comparison or 'in', got {v3!r}")
        a = self.slice_bound()
        self.expect("op", ":")
        b = self.slice_bound()
        self.expect("op", ",")
        c = self.slice_bound()
        self.expect("op", ":")
        d = self.slice_bound()
        self.expect("op", "]")
        return Slice(base, (a, b, c, d))

    def statement(self) -> Stmt:
        target = self.expect("name")
        self.expect("op", "=")
        e = self.expr()
        self.expect("eof")
        return Stmt(target, e, self.line)


def parse_program(text: str) -> list[Stmt]:
    """Parse newline-separated statements; blank lines are skipped."""
    stmts = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            stmts.append(_Parser(_tokens(raw, lineno), lineno).statement())
        except MiniTableSyntax as exc:
            exc.line = lineno
            raise
    return stmts


# --- evaluation ----------------------------------------------------------------

Env = dict[str, Value]

_BUILTINS: dict[str, Callable[..., Value]] = {}


def register_builtin(name: str, fn: Callable[..., Value]) -> None:
    _BUILTINS[name] = fn


def _cmp(op: str, a: Cell, b: Cell) -> bool:
    if isinstance(a, bool) != isinstance(b, bool):
        raise MiniTableType("cannot compare bool with non-bool")
    if isinstance(a, bool):
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        raise MiniTableType("bools only support == and !=")
    if isinstance(a, str) != isinstance(b, str):
        raise MiniTableType("cannot compare str with num")
    return {
        "<": a < b, "<=": a <= b, ">": a > b,
        ">=": a >= b, "==": a == b, "!=": a != b,
    }[op]


def _lookup(env: Env, name: str, line: int) -> Value:
    if name not in env:
        raise UnboundVariable(f"line {line}: unbound variable {name!r}")
    return env[name]


def _as_table(v: Value, what: str, line: int) -> Table:
    if not isinstance(v, Table):
        raise MiniTableType(f"line {line}: {what} requires a table, got {type_of(v)}")
    return v


def _bound(env: Env, b, line: int) -> int:
    if isinstance(b, int):
        return b
    v = _lookup(env, b, line)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not float(v).is_integer():
        raise MiniTableType(f"line {line}: slice bound {b!r} must be a whole number")
    if v < 0:
        raise IndexOutOfRange(f"line {line}: negative slice bound {b!r}")
    return int(v)


def eval_expr(expr: Expr, env: Env, line: int = 0) -> Value:
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Var):
        return _lookup(env, expr.name, line)
    if isinstance(expr, Filter):
        if expr.base != expr.inner:
            raise MiniTableType(
                f"line {line}: filter must test the table being filtered "
                f"({expr.base!r} vs {expr.inner!r})"
            )
        t = _as_table(_lookup(env, expr.base, line), "filter", line)
        i = t.col_index(expr.col)
        keep = tuple(r for r in t.rows if _cmp(expr.op, r[i], expr.literal.value))
        return Table(t.columns, keep)
    if isinstance(expr, FilterIn):
        if expr.base != expr.inner:
            raise MiniTableType(f"line {line}: filter must test the table being filtered")
        t = _as_table(_lookup(env, expr.base, line), "filter", line)
        i = t.col_index(expr.col)
        wanted = [lit.value for lit in expr.values]
        keep = tuple(r for r in t.rows if any(_in_eq(r[i], w) for w in wanted))
        return Table(t.columns, keep)
    if isinstance(expr, Slice):
        g = _lookup(env, expr.base, line)
        if not isinstance(g, Grid):
            raise MiniTableType(f"line {line}: slicing requires a grid, got {type_of(g)}")
        a, b, c, d = (_bound(env, x, line) for x in expr.bounds)
        rows, cols = g.shape
        if not (a <= b <= rows and c <= d <= cols):
            raise IndexOutOfRange(
                f"line {line}: slice [{a}:{b}, {c}:{d}] out of range for {rows}x{cols} grid"
            )
        return Grid(tuple(r[c:d] for r in g.cells[a:b]))
    if isinstance(expr, Insert):
        t = _as_table(_lookup(env, expr.base, line), "insert", line)
        if expr.name in t.columns:
            raise MiniTableType(f"line {line}: column {expr.name!r} already exists")
        if expr.index > len(t.columns):
            raise IndexOutOfRange(f"line {line}: insert index {expr.index} out of range")
        vals = [lit.value for lit in expr.values]
        if len(vals) == 1:
            vals = vals * len(t.rows)  # scalar fill broadcasts
        if len(vals) != len(t.rows):
            raise MiniTableType(
                f"line {line}: column of {len(vals)} values for {len(t.rows)} rows"
            )
        cols = t.columns[: expr.index] + (expr.name,) + t.columns[expr.index:]
        rows = tuple(
            r[: expr.index] + (v,) + r[expr.index:] for r, v in zip(t.rows, vals)
        )
        return Table(cols, rows)
    if isinstance(expr, Call):
        fn = _BUILTINS.get(expr.name)
        if fn is None:
            raise UnknownFunction(f"line {line}: unknown function {expr.name!r}")
        args = [
            _lookup(env, a.name, line) if isinstance(a, Var) else a.value
            for a in expr.args
        ]
        try:
            return fn(*args)
        except TypeError as exc:
            raise MiniTableType(f"line {line}: {exc}") from None
    raise MiniTableType(f"line {line}: cannot evaluate {expr!r}")


def _in_eq(cell: Cell, wanted: Cell) -> bool:
    if isinstance(cell, bool) != isinstance(wanted, bool):
        return False
    if isinstance(cell, str) != isinstance(wanted, str):
        return False
    return cell == wanted


def eval_program(stmts: list[Stmt], env: Env) -> Env:
    """Evaluate statements over a copy of ``env``; the input is unmodified."""
    out = dict(env)
    for s in stmts:
        try:
            out[s.target] = eval_expr(s.expr, out, s.line)
        except MiniTableError as exc:
            if getattr(exc, "line", None) is None:
                exc.line = s.line
            raise
    return out


# --- table builtins -------------------------------------------------------------


def _move_col(t: Value, name: Value, index: Value) -> Table:
    if not isinstance(t, Table) or not isinstance(name, str):
        raise MiniTableType("move_col(table, \"name\", index)")
    if isinstance(index, bool) or not float(index).is_integer():
        raise MiniTableType("move_col index must be a whole number")
    index = int(index)
    i = t.col_index(name)
    if not 0 <= index < len(t.columns):
        raise IndexOutOfRange(f"move_col index {index} out of range")
    names = list(t.columns)
    names.insert(index, names.pop(i))
    rows = []
    for r in t.rows:
        cells = list(r)
        cells.insert(index, cells.pop(i))
        rows.append(tuple(cells))
    return Table(tuple(names), tuple(rows))


def _drop_col(t: Value, name: Value) -> Table:
    if not isinstance(t, Table) or not isinstance(name, str):
        raise MiniTableType("drop_col(table, \"name\")")
    i = t.col_index(name)
    return Table(
        t.columns[:i] + t.columns[i + 1:],
        tuple(r[:i] + r[i + 1:] for r in t.rows),
    )


def _sort_by(t: Value, col: Value) -> Table:
    if not isinstance(t, Table) or not isinstance(col, str):
        raise MiniTableType("sort_by(table, \"column\")")
    i = t.col_index(col)
    kinds = {type_of(r[i]) for r in t.rows}
    if len(kinds) > 1:
        raise MiniTableType(f"cannot sort mixed-type column {col!r}")
    return Table(t.columns, tuple(sorted(t.rows, key=lambda r: r[i])))


register_builtin("move_col", _move_col)
register_builtin("drop_col", _drop_col)
register_builtin("sort_by", _sort_by)
