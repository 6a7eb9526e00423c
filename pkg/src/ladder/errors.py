"""Engine error types.

Every error carries a stable ``code`` that the HTTP service maps into its
structured error body, and an optional ``path`` locating the offending field.
"""

from __future__ import annotations


class LadderError(Exception):
    code = "error"

    def __init__(self, message: str = "", *, path: str | None = None):
        super().__init__(message)
        self.path = path


class NotFound(LadderError):
    code = "not_found"


class InvalidRelation(LadderError):
    code = "invalid_relation"


class InvalidTarget(LadderError):
    code = "invalid_target"


class CycleError(LadderError):
    code = "cycle"


class RangeError(LadderError):
    code = "range"


class InputTooLarge(LadderError):
    code = "input_too_large"


class PreconditionError(LadderError):
    code = "precondition"


class ParseError(LadderError):
    code = "parse"


class CompositionError(LadderError):
    code = "composition"


class AmbiguousEdit(LadderError):
    code = "ambiguous_edit"


class TemplateError(LadderError):
    code = "template"


class ContextOverflow(LadderError):
    code = "context_overflow"


class BackendUnavailable(LadderError):
    code = "backend_unavailable"


class MockMiss(LadderError):
    """A mock backend had no fixture for the request; carries the canonical key."""

    code = "mock_miss"

    def __init__(self, message: str = "", *, key: str | None = None):
        super().__init__(message)
        self.key = key


class ResponseFormatError(LadderError):
    """Backend response did not match the expected tagged-fence format."""

    code = "response_format"

    def __init__(self, message: str = "", *, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class ChainAborted(LadderError):
    """A propagation chain failed mid-way; applied steps remain applied."""

    code = "chain_aborted"

    def __init__(self, message: str = "", *, plan=None, cause: Exception | None = None):
        super().__init__(message)
        self.plan = plan
        self.cause = cause


class RunnerUnavailable(LadderError):
    code = "runner_unavailable"


class RunTimeout(LadderError):
    """Interim execution hit its wall-clock limit; carries partial output."""

    code = "timeout"

    def __init__(self, message: str = "", *, partial=None):
        super().__init__(message)
        self.partial = partial


class Conflict(LadderError):
    code = "conflict"
