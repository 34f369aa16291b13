"""Exception hierarchy shared across the package."""


class NestCheckError(Exception):
    """Base class for every error raised by nestcheck."""


class ParseError(NestCheckError):
    """Malformed input text. Carries a 1-based line/column when known."""

    def __init__(self, message, line=None, column=None, source=None):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
            if column is not None:
                where += f"{column}:"
        super().__init__(f"{where} {message}" if where else message)


class ModelFormatError(ParseError):
    """A `.sm` or `.mm` document violates the grammar or model invariants."""


class StaticCheckError(ParseError):
    """A problem expression failed scoping or binding-independence checks."""


class PropertyError(NestCheckError):
    """Unknown property syntax, kind mismatch or unknown label."""


class InstantiationError(NestCheckError):
    """Bindings do not match a meta model's placeholders."""


class ModelNotFoundError(NestCheckError):
    def __init__(self, name, message=None):
        self.name = name
        super().__init__(message or f"model {name!r} not found")


class EvaluationError(NestCheckError):
    """Runtime failure while evaluating a problem (e.g. division by zero)."""
