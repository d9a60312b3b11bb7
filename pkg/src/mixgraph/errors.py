"""Exception types carrying the stable error codes used across the package."""

from __future__ import annotations


class MixGraphError(ValueError):
    """Base error; ``code`` is a short machine-readable identifier."""

    code = "error"

    def __init__(self, code: str | None = None, message: str = ""):
        if code is not None:
            self.code = code
        self.message = message or self.code
        super().__init__(f"{self.code}: {self.message}" if message else self.code)


class GraphError(MixGraphError):
    code = "bad-graph"


class BoundaryError(MixGraphError):
    code = "bad-bc"


class SpectralError(MixGraphError):
    code = "spectral"


class ResolventError(MixGraphError):
    code = "lambda-in-spectrum"


class EvolutionError(MixGraphError):
    code = "evolution"


class DelayError(MixGraphError):
    code = "delay"


class ParseError(MixGraphError):
    code = "parse-error"
