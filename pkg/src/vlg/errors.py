"""Exception and warning types shared across the package.

Every error raised on purpose derives from :class:`VLGError`, so callers (the
CLI in particular) can tell a structured failure from a programming bug.
"""

from __future__ import annotations


class VLGError(Exception):
    """Base class for structured, expected failures."""


# -- pattern files -----------------------------------------------------------


class PatternError(VLGError):
    """Problem with a pattern document or value."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class PatternSyntaxError(PatternError):
    """The document is not well-formed UTF-8 JSON."""


class SchemaError(PatternError):
    """Missing or extra field, wrong type or wrong arity."""


class InvariantError(PatternError):
    """The document is well-formed but violates a pattern invariant."""

    def __init__(self, message: str, path: str = "", issues=()):
        self.issues = list(issues)
        super().__init__(message, path)


class DegenerateError(PatternError):
    """Boundary has (near) zero length."""


# -- token streams -----------------------------------------------------------


class DecodeError(VLGError):
    """A token stream could not be turned into a pattern."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"token {index}: {message}")


class GrammarError(DecodeError):
    pass


class ClosureError(DecodeError):
    pass


class RefError(DecodeError):
    pass


class QuatError(DecodeError):
    pass


class ParamError(DecodeError):
    """Non-finite continuous parameter."""


class InvalidDecodeError(DecodeError):
    """Decoded pattern fails validation (e.g. reused stitch edge)."""


# -- metrics -------------------------------------------------------------------


class DimError(VLGError):
    pass


class SizeError(VLGError):
    pass


class UnclassifiableError(VLGError):
    pass


# -- data / config -------------------------------------------------------------


class ConfigError(VLGError):
    pass


class DataError(VLGError):
    pass


# -- autodiff -------------------------------------------------------------------


class ShapeError(VLGError):
    pass


class IdError(VLGError):
    pass


class NotScalarError(VLGError):
    pass


class StaleTapeError(VLGError):
    pass


# -- model / training ------------------------------------------------------------


class RangeError(VLGError):
    pass


class LengthError(VLGError):
    pass


class VocabError(VLGError):
    pass


class NonFiniteError(VLGError):
    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"step {step}: {message}")


class CheckpointError(VLGError):
    pass


class VersionError(CheckpointError):
    pass


class CorruptionError(CheckpointError):
    pass


# -- experiments -----------------------------------------------------------------


class MissingSplitError(VLGError):
    pass


class MissingTierError(VLGError):
    pass


class BudgetMismatchError(VLGError):
    pass


# -- warnings --------------------------------------------------------------------


class VLGWarning(UserWarning):
    pass


class EmptyPatternWarning(VLGWarning):
    """Both patterns empty; Vertex L2 defined as 0."""


class EmptyConstraintWarning(VLGWarning):
    """Prompt specifies no constraint; alignment defined as 1."""


class OutOfCanvasWarning(VLGWarning):
    """Less than half of the silhouette is visible."""


class SelfIntersectionWarning(VLGWarning):
    pass
