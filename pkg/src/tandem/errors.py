"""Engine error hierarchy.

Every error that can cross the wire carries a stable ``code`` string; the
protocol server maps exceptions to error objects with that code.  Errors that
originate from a tool's own requirements (currently only type checking of
invocation arguments) may additionally carry a ``tool_message`` shown verbatim
to the user.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""

    code = "engine-error"

    def __init__(self, message: str, *, tool_message: str | None = None):
        super().__init__(message)
        self.tool_message = tool_message


# --- template engine ---------------------------------------------------------


class TemplateError(EngineError):
    code = "template-error"


class PackSyntaxError(TemplateError):
    """Malformed pack text: bad header, bad blank declaration, stray body."""

    code = "pack-syntax"


class MultilineBody(TemplateError):
    code = "multiline-body"


class UndeclaredBlank(TemplateError):
    code = "undeclared-blank"


class UnusedBlank(TemplateError):
    code = "unused-blank"


class DuplicateBlank(TemplateError):
    code = "duplicate-blank"


class MissingBinding(TemplateError):
    code = "missing-binding"


class KindMismatch(TemplateError):
    code = "kind-mismatch"


class InvalidPack(TemplateError):
    code = "invalid-pack"


class NoVariantForDialect(TemplateError):
    code = "no-variant-for-dialect"


class TypeCheckFailed(EngineError):
    """Displayed data does not satisfy a tool or template type requirement."""

    code = "type-check-failed"


# --- minitable ----------------------------------------------------------------


class MiniTableError(EngineError):
    code = "minitable-error"


class MiniTableSyntax(MiniTableError):
    code = "minitable-syntax"


class UnboundVariable(MiniTableError):
    code = "unbound-variable"


class UnknownFunction(MiniTableError):
    code = "unknown-function"


class MiniTableType(MiniTableError):
    code = "minitable-type"


class IndexOutOfRange(MiniTableError):
    code = "index-out-of-range"


# --- document -----------------------------------------------------------------


class DocumentError(EngineError):
    code = "document-error"


class NotAnInvocation(DocumentError):
    code = "not-an-invocation"


class NonIdentifierArgument(DocumentError):
    code = "non-identifier-argument"


class NoInvocation(DocumentError):
    code = "no-invocation"


class InvocationLineModified(DocumentError):
    code = "invocation-line-modified"


class FrozenInWritable(DocumentError):
    code = "frozen-in-writable"


class VersionMismatch(DocumentError):
    code = "version-mismatch"


class MalformedDocument(DocumentError):
    code = "malformed-document"


# --- executor -----------------------------------------------------------------


class ExecutorError(EngineError):
    code = "executor-error"


class SpawnFailed(ExecutorError):
    code = "spawn-failed"


class ProtocolError(ExecutorError):
    code = "protocol-error"


class ExecTimeout(ExecutorError):
    code = "timeout"


class ExecutionFailed(EngineError):
    code = "execution-failed"


# --- session ------------------------------------------------------------------


class SessionError(EngineError):
    code = "session-error"


class UnknownTool(SessionError):
    code = "unknown-tool"


class DuplicateTool(SessionError):
    code = "duplicate-tool"


class ArityMismatch(SessionError):
    code = "arity-mismatch"


class UnknownInstance(SessionError):
    code = "unknown-instance"


class UnknownCell(SessionError):
    code = "unknown-cell"


class InstanceExists(SessionError):
    code = "instance-exists"


class UnknownAction(SessionError):
    code = "unknown-action"


class UnknownTarget(SessionError):
    code = "unknown-target"


class EmptySelection(SessionError):
    code = "empty-selection"


class UnsupportedSelection(SessionError):
    code = "unsupported-selection"


class UnknownPreprocess(SessionError):
    code = "unknown-preprocess"


# --- server -------------------------------------------------------------------


class MalformedFrame(EngineError):
    code = "malformed-frame"


class UnknownMethod(EngineError):
    code = "unknown-method"
