"""Exception types shared across the package."""

from __future__ import annotations


class DoaPoseError(Exception):
    """Base class for all errors raised by doapose."""


class EmptyInput(DoaPoseError, ValueError):
    pass


class DegenerateTranslation(DoaPoseError, ValueError):
    """A translation vector is too short to define a direction."""

    def __init__(self, a_degenerate: bool, b_degenerate: bool):
        self.a_degenerate = a_degenerate
        self.b_degenerate = b_degenerate
        super().__init__(
            f"degenerate translation (a: {a_degenerate}, b: {b_degenerate})"
        )


class GimbalDegenerate(DoaPoseError, ValueError):
    pass


class ClipTooShort(DoaPoseError, ValueError):
    pass


class NonInvertibleConfig(DoaPoseError, ValueError):
    pass


class NotBinaural(DoaPoseError, ValueError):
    pass


class NotMono(DoaPoseError, ValueError):
    pass


class ShapeMismatch(DoaPoseError, ValueError):
    pass


class TooFewChannels(DoaPoseError, ValueError):
    pass


class EmptyBand(DoaPoseError, ValueError):
    pass


class SourceInsideArray(DoaPoseError, ValueError):
    pass


class NonPositiveTau(DoaPoseError, ValueError):
    pass


class IdMismatch(DoaPoseError, ValueError):
    def __init__(self, missing: list[str], extra: list[str], duplicated: list[str] = ()):
        self.missing = sorted(missing)
        self.extra = sorted(extra)
        self.duplicated = sorted(duplicated)
        parts = []
        if self.missing:
            parts.append("missing predictions for: " + ", ".join(self.missing))
        if self.extra:
            parts.append("unknown ids: " + ", ".join(self.extra))
        if self.duplicated:
            parts.append("duplicated ids: " + ", ".join(self.duplicated))
        super().__init__("; ".join(parts) or "id mismatch")


class SchemaError(DoaPoseError, ValueError):
    """A file or config does not match its expected layout.

    ``path`` is the dotted key path of the offending entry, when known.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class FormatVersionError(SchemaError):
    pass


class ModalityMismatch(DoaPoseError, ValueError):
    """Audio channel count does not match the array geometry."""


class IncompatibleRuns(DoaPoseError, ValueError):
    pass
