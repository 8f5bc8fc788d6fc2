"""Typed single-line code templates and their inverse recognizers.

A template is one line of code with named blanks (``$COL``, ``$EXPR``...).
Instantiating a template with a binding set produces a generated code line;
compiling it yields an anchored regular expression that parses such a line
back into the same binding set.  Templates are grouped into variant sets by
action name, one variant per dialect, so the same GUI action can emit code
for different interpreter backends.

Pack file format (UTF-8 text)::

    #vartype table
    #template filter filter minitable DF:IDENT:ENV COL:COLNAME:ACTION EXPR:EXPR:ACTION
    $DF = $DF[$DF.$COL $EXPR]

``#vartype`` sets the semantic type tag required of the displayed variable
for every variant set declared after it.  A ``#template`` header carries
``<template_id> <action_name> <dialect>`` followed by one ``NAME:KIND:SOURCE``
declaration per blank (SOURCE is ``ACTION`` for tool-supplied values or
``ENV`` for values resolved from the session, e.g. the displayed variable's
name).  The single body line follows immediately.  ``$$`` in a body is an
escaped literal dollar sign.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .errors import (
    DuplicateBlank,
    InvalidPack,
    KindMismatch,
    MissingBinding,
    MultilineBody,
    NoVariantForDialect,
    PackSyntaxError,
    TypeCheckFailed,
    UndeclaredBlank,
    UnusedBlank,
)

__all__ = [
    "BlankKind",
    "BlankSource",
    "BlankSpec",
    "TemplateSpec",
    "TemplateVariantSet",
    "Recognizer",
    "parse_template",
    "parse_pack",
    "instantiate",
    "validate_value",
    "compile_recognizer",
    "recognize_line",
    "select_variant",
    "normalize_ws",
]


class BlankKind(enum.Enum):
    IDENT = "IDENT"
    COLNAME = "COLNAME"
    NUMBER = "NUMBER"
    STRING = "STRING"
    COMPARISON = "COMPARISON"
    EXPR = "EXPR"
    INDEX = "INDEX"


class BlankSource(enum.Enum):
    ACTION_DATA = "ACTION"
    ENV_RESOLVED = "ENV"


_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_NUMBER = r"-?(?:\d+\.\d*|\.\d+|\d+)"
_STRING = r'"[^"\\]*"'
_COMPARISON = r"(?:<=|>=|==|!=|<|>)"

# Surface-syntax pattern per kind.  NUMBER deliberately cannot match a bare
# identifier; recognition must stay conservative rather than guess.
KIND_PATTERNS: dict[BlankKind, str] = {
    BlankKind.IDENT: _IDENT,
    BlankKind.COLNAME: rf"(?:{_IDENT}|{_STRING})",
    BlankKind.NUMBER: _NUMBER,
    BlankKind.STRING: _STRING,
    BlankKind.COMPARISON: _COMPARISON,
    BlankKind.EXPR: rf"{_COMPARISON} ?(?:{_NUMBER}|{_STRING})",
    BlankKind.INDEX: r"\d+",
}

_KIND_RES = {kind: re.compile(pat) for kind, pat in KIND_PATTERNS.items()}

_WS_RUN = re.compile(r"[ \t]+")


def normalize_ws(line: str) -> str:
    """Collapse runs of spaces/tabs to single spaces and strip the ends."""
    return _WS_RUN.sub(" ", line).strip()


@dataclass(frozen=True)
class BlankSpec:
    name: str
    kind: BlankKind
    source: BlankSource = BlankSource.ACTION_DATA


@dataclass(frozen=True)
class TemplateSpec:
    template_id: str
    action_name: str
    dialect: str
    body: str
    blanks: tuple[BlankSpec, ...]

    def blank(self, name: str) -> BlankSpec:
        for b in self.blanks:
            if b.name == name:
                return b
        raise KeyError(name)


@dataclass
class TemplateVariantSet:
    action_name: str
    required_var_type: str
    variants: list[TemplateSpec] = field(default_factory=list)


# A BindingSet is a plain dict: blank name -> value in surface syntax.
BindingSet = dict[str, str]

_BLANK_NAME = re.compile(r"[A-Z][A-Z0-9_]*")
_TOKEN = re.compile(r"\$\$|\$[A-Z][A-Z0-9_]*|\$|[^$]+")


def _tokenize_body(body: str, template_id: str) -> list[str | tuple[str]]:
    """Split a body into literal strings and 1-tuples naming blanks."""
    out: list[str | tuple[str]] = []
    for m in _TOKEN.finditer(body):
        tok = m.group(0)
        if tok == "$$":
            out.append("$")
        elif tok == "$":
            raise PackSyntaxError(
                f"template {template_id!r}: stray '$' in body (use '$$' for a literal)"
            )
        elif tok.startswith("$"):
            out.append((tok[1:],))
        else:
            out.append(tok)
    return out


def _parse_header(line: str) -> tuple[str, str, str, tuple[BlankSpec, ...]]:
    parts = line.split()
    if parts[0] != "#template" or len(parts) < 4:
        raise PackSyntaxError(f"bad template header: {line!r}")
    template_id, action_name, dialect = parts[1:4]
    blanks = []
    seen: set[str] = set()
    for decl in parts[4:]:
        fields = decl.split(":")
        if len(fields) != 3:
            raise PackSyntaxError(f"bad blank declaration {decl!r} in {template_id!r}")
        name, kind_s, source_s = fields
        if not _BLANK_NAME.fullmatch(name):
            raise PackSyntaxError(f"bad blank name {name!r} in {template_id!r}")
        if name in seen:
            raise DuplicateBlank(f"template {template_id!r}: blank {name!r} declared twice")
        seen.add(name)
        try:
            kind = BlankKind(kind_s)
        except ValueError:
            raise PackSyntaxError(f"unknown blank kind {kind_s!r} in {template_id!r}") from None
        try:
            source = BlankSource(source_s)
        except ValueError:
            raise PackSyntaxError(f"unknown blank source {source_s!r} in {template_id!r}") from None
        if source is BlankSource.ENV_RESOLVED and kind is not BlankKind.IDENT:
            raise PackSyntaxError(
                f"template {template_id!r}: ENV blank {name!r} must have kind IDENT"
            )
        blanks.append(BlankSpec(name, kind, source))
    return template_id, action_name, dialect, tuple(blanks)


def parse_template(source: str) -> TemplateSpec:
    """Parse one header line plus one body line into a TemplateSpec.

    Raises MultilineBody if more than one body line is present, and checks
    that the declared blanks and the blanks referenced by the body agree.
    """
    lines = [ln for ln in source.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise PackSyntaxError("template source needs a header line and a body line")
    if len(lines) > 2:
        raise MultilineBody(f"template body must be a single line, got {len(lines) - 1}")
    template_id, action_name, dialect, blanks = _parse_header(lines[0])
    body = normalize_ws(lines[1])
    used = {tok[0] for tok in _tokenize_body(body, template_id) if isinstance(tok, tuple)}
    declared = {b.name for b in blanks}
    if used - declared:
        raise UndeclaredBlank(
            f"template {template_id!r}: body references undeclared {sorted(used - declared)}"
        )
    if declared - used:
        raise UnusedBlank(
            f"template {template_id!r}: declared but unused {sorted(declared - used)}"
        )
    return TemplateSpec(template_id, action_name, dialect, body, blanks)


def parse_pack(text: str) -> tuple[list[TemplateSpec], dict[str, str]]:
    """Parse a pack file.

    Returns the templates in declaration order plus a map from action name to
    the ``#vartype`` tag in effect where that action was first declared.
    """
    templates: list[TemplateSpec] = []
    vartypes: dict[str, str] = {}
    current_vartype: str | None = None
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if not line or line.startswith("##"):
            i += 1
            continue
        if line.startswith("#vartype"):
            parts = line.split()
            if len(parts) != 2:
                raise PackSyntaxError(f"bad vartype line: {line!r}")
            current_vartype = parts[1]
            i += 1
            continue
        if line.startswith("#template"):
            if i + 1 >= len(lines) or not lines[i + 1].strip():
                raise PackSyntaxError(f"template header without body: {line!r}")
            spec = parse_template(line + "\n" + lines[i + 1])
            if current_vartype is None:
                raise PackSyntaxError(
                    f"template {spec.template_id!r} declared before any #vartype"
                )
            if any(t.template_id == spec.template_id for t in templates):
                raise InvalidPack(f"duplicate template id {spec.template_id!r}")
            templates.append(spec)
            vartypes.setdefault(spec.action_name, current_vartype)
            i += 2
            continue
        raise PackSyntaxError(f"unexpected pack line: {line!r}")
    return templates, vartypes


def group_variant_sets(
    templates: list[TemplateSpec], vartypes: dict[str, str]
) -> dict[str, TemplateVariantSet]:
    """Group templates into variant sets by action name, in declaration order."""
    sets: dict[str, TemplateVariantSet] = {}
    for t in templates:
        vs = sets.get(t.action_name)
        if vs is None:
            vs = TemplateVariantSet(t.action_name, vartypes[t.action_name])
            sets[t.action_name] = vs
        if any(v.dialect == t.dialect for v in vs.variants):
            raise InvalidPack(
                f"action {t.action_name!r} has two variants for dialect {t.dialect!r}"
            )
        vs.variants.append(t)
    return sets


def validate_value(kind: BlankKind, value: str) -> bool:
    """True if ``value`` is valid surface syntax for ``kind``.

    Values must already be whitespace-normalized (no tabs/newlines, no double
    spaces): generated lines use single spaces, and recognizers normalize
    whitespace runs before matching, so anything looser could not round-trip.
    """
    if "\t" in value or "\n" in value or "  " in value:
        return False
    if value != value.strip():
        return False
    return _KIND_RES[kind].fullmatch(value) is not None


def instantiate(template: TemplateSpec, bindings: BindingSet) -> str:
    """Fill every blank, validating each value against its kind pattern."""
    for b in template.blanks:
        if b.name not in bindings:
            raise MissingBinding(f"template {template.template_id!r}: no binding for {b.name!r}")
        if not validate_value(b.kind, bindings[b.name]):
            raise KindMismatch(
                f"template {template.template_id!r}: value {bindings[b.name]!r} "
                f"is not a valid {b.kind.value} for blank {b.name!r}"
            )
    parts = []
    for tok in _tokenize_body(template.body, template.template_id):
        parts.append(bindings[tok[0]] if isinstance(tok, tuple) else tok)
    return "".join(parts)


@dataclass(frozen=True)
class Recognizer:
    template: TemplateSpec
    pattern: re.Pattern[str]

    @property
    def template_id(self) -> str:
        return self.template.template_id


def compile_recognizer(template: TemplateSpec) -> Recognizer:
    """Compile the template into an anchored whole-line pattern.

    Literal segments are escaped; each blank becomes a named capture of its
    kind pattern; a repeated blank becomes a backreference so every occurrence
    must capture identical text.
    """
    parts = []
    seen: set[str] = set()
    for tok in _tokenize_body(template.body, template.template_id):
        if isinstance(tok, tuple):
            name = tok[0]
            if name in seen:
                parts.append(rf"(?P={name})")
            else:
                seen.add(name)
                kind = template.blank(name).kind
                parts.append(rf"(?P<{name}>{KIND_PATTERNS[kind]})")
        else:
            # body text was whitespace-normalized at parse time
            parts.append(re.escape(tok))
    return Recognizer(template, re.compile("".join(parts)))


def recognize_line(
    recognizers: list[Recognizer], line: str
) -> tuple[str, BindingSet] | None:
    """Match a code line against recognizers in order; first match wins.

    The line's whitespace runs are collapsed to single spaces before matching.
    Returns ``(template_id, bindings)`` or None if nothing matched.
    """
    text = normalize_ws(line)
    for rec in recognizers:
        m = rec.pattern.fullmatch(text)
        if m:
            return rec.template_id, dict(m.groupdict())
    return None


def select_variant(
    variant_set: TemplateVariantSet, var_type: str, session_dialect: str
) -> TemplateSpec:
    """Pick the variant for the session dialect, type-checking the variable.

    ``var_type`` is the semantic type tag of the displayed variable's current
    snapshot.  Dialect is checked first: with no variant for the session's
    dialect the action simply is not available; with a variant present but a
    wrong variable type the caller gets a type-check failure to surface.
    """
    matching = [t for t in variant_set.variants if t.dialect == session_dialect]
    if not matching:
        raise NoVariantForDialect(
            f"action {variant_set.action_name!r} has no variant for dialect "
            f"{session_dialect!r}"
        )
    if variant_set.required_var_type != var_type:
        raise TypeCheckFailed(
            f"action {variant_set.action_name!r} requires a value of type "
            f"{variant_set.required_var_type!r}, got {var_type!r}"
        )
    return matching[0]
