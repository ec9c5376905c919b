"""Exception hierarchy shared by all ihcq modules.

Every error carries a stable machine ``code`` so the HTTP facade and the
CLI can map failures without string matching.
"""


class IhcqError(Exception):
    """Base class for all domain errors."""

    code = "invalid_input"


class InvalidInputError(IhcqError):
    """Malformed or inconsistent caller-supplied data."""

    code = "invalid_input"


class MalformedMaskError(InvalidInputError):
    """Run-length data that does not describe a valid bitmap."""


class EmptyMaskError(InvalidInputError):
    """An operation produced or received a mask with no foreground."""


class MaskShapeError(InvalidInputError):
    """Two masks with different dimensions were combined."""


class UndefinedIoUError(InvalidInputError):
    """IoU requested for two empty masks."""


class InvalidDocumentError(InvalidInputError):
    """Annotation document or prediction file violates its schema."""


class EmptyDatasetError(IhcqError):
    """No ground-truth instances (or no cells) to work with."""

    code = "empty_dataset"


class NoCellsError(EmptyDatasetError):
    """A biomarker score was requested over zero instances."""


class NotFoundError(IhcqError):
    """Referenced slide, tile, document or file does not exist."""

    code = "not_found"


class VersionConflictError(IhcqError):
    """Optimistic-concurrency check failed on a document save."""

    code = "conflict"
