"""Error types shared by every controller subsystem.

Every error carries a machine-readable ``code`` plus the ``subject`` that
caused it, so the REST layer can answer ``{code, message, subject}``
without inspecting message strings.
"""


class OxpError(Exception):
    """Base class for controller errors."""

    code = "VALIDATION"

    def __init__(self, message, subject=None):
        super().__init__(message)
        self.message = message
        self.subject = subject

    def to_dict(self):
        return {"code": self.code, "message": self.message, "subject": self.subject}


class ValidationError(OxpError):
    """Malformed or invariant-violating input."""

    code = "VALIDATION"


class ConflictError(OxpError):
    """Resource already in use (duplicate connector, busy circuit, ...)."""

    code = "CONFLICT"


class IsolationError(OxpError):
    """Request would cross a virtual eXchange Point boundary."""

    code = "ISOLATION"


class NotFoundError(OxpError):
    """Named entity does not exist."""

    code = "NOT_FOUND"


class NoPathError(OxpError):
    """No usable path between the requested end-points."""

    code = "NO_PATH"
