"""Exception hierarchy shared by the simulator modules."""


class SemlinkError(Exception):
    """Base class for all simulator errors."""


class ParameterError(SemlinkError, ValueError):
    """Invalid numeric parameter (channel sizes, empty vectors, ...)."""


class EncodingError(SemlinkError, ValueError):
    pass


class DecodingError(SemlinkError, ValueError):
    pass


class CodecError(SemlinkError, ValueError):
    pass


class ToolError(SemlinkError):
    """Preprocessing tool could not run (missing annotation, unbound label)."""


class MetricError(SemlinkError, ValueError):
    pass


class OracleError(SemlinkError):
    """A VLM oracle failed to answer."""


class OracleScriptGap(OracleError):
    """Scripted oracle has no record for the requested step."""

    def __init__(self, kind: str, step: int):
        super().__init__(f"oracle script has no '{kind}' entry for step {step}")
        self.kind = kind
        self.step = step


class ConfigError(SemlinkError, ValueError):
    pass
