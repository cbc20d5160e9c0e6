"""Exception hierarchy shared across the package.

Every error raised by exdet derives from :class:`ExdetError`, so callers can
catch one base class at integration boundaries (the CLI maps subtrees to
exit codes).
"""

from __future__ import annotations


class ExdetError(Exception):
    """Base class for all exdet errors."""


# --- geometry ---------------------------------------------------------------

class DegeneratePoint(ExdetError):
    """A point maps to infinity under a homography (w-component ~ 0)."""


class DegenerateConfiguration(ExdetError):
    """Point configuration or matrix is rank-deficient / non-invertible."""


class EmptyAfterClip(ExdetError):
    """A box has zero area after clipping to the image rectangle."""


# --- features / candidates --------------------------------------------------

class EmptyFeatureMap(ExdetError):
    """Feature map contains no cells."""


class ZeroQueryFeature(ExdetError):
    """Query feature vector has zero norm; cosine similarity is undefined."""


class DimensionMismatch(ExdetError):
    """Feature dimensions of query and target disagree."""


# --- verification -----------------------------------------------------------

class TooFewMatches(ExdetError):
    """Fewer correspondences than the estimator requires."""


class NoValidModel(ExdetError):
    """Every RANSAC sample was degenerate; no model could be fit."""


# --- backends ---------------------------------------------------------------

class UnknownTextPrompt(ExdetError):
    """Text prompt is outside the synthetic detector's color vocabulary."""


class BackendUnavailable(ExdetError):
    """A backend call failed at the transport level.

    ``kind`` is one of ``"timeout"``, ``"connection"``, ``"status"``.
    """

    def __init__(self, kind: str, endpoint: str = "", status: int | None = None):
        self.kind = kind
        self.endpoint = endpoint
        self.status = status
        detail = f"{kind} ({endpoint}"
        if status is not None:
            detail += f", HTTP {status}"
        detail += ")"
        super().__init__(f"backend unavailable: {detail}")


class SchemaViolation(ExdetError):
    """A wire document is missing or mistypes a required field."""

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        msg = f"schema violation in field {field!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ImageDecodeError(ExdetError):
    """An image file or buffer could not be decoded."""


# --- exemplar store ---------------------------------------------------------

class StoreError(ExdetError):
    """Base class for exemplar-store failures."""


class ManifestMissing(StoreError):
    """No manifest.json at the store root."""


class ManifestCorrupt(StoreError):
    """Manifest exists but cannot be parsed or violates its schema."""

    def __init__(self, detail: str, position: int | None = None):
        self.position = position
        if position is not None:
            detail = f"{detail} (at byte {position})"
        super().__init__(f"manifest corrupt: {detail}")


class MissingImage(StoreError):
    """Manifest references an image file that is absent or unreadable."""

    def __init__(self, exemplar_id: str, detail: str = "file missing"):
        self.exemplar_id = exemplar_id
        super().__init__(f"exemplar {exemplar_id}: {detail}")


class DuplicateId(StoreError):
    """Two exemplars share an id (or an add collides with an existing one)."""

    def __init__(self, exemplar_id: str):
        self.exemplar_id = exemplar_id
        super().__init__(f"duplicate exemplar id {exemplar_id}")


class UnknownExemplarId(StoreError):
    """An operation names an exemplar id not present in the store."""

    def __init__(self, exemplar_id: str):
        self.exemplar_id = exemplar_id
        super().__init__(f"unknown exemplar id {exemplar_id}")


class CropOutOfBounds(StoreError):
    """Requested crop rectangle leaves the source image or is empty."""


class CropTooSmall(StoreError):
    """Crop side below the 8 px floor where candidate search is unreliable."""


class IoFailure(StoreError):
    """Filesystem error while writing store contents."""


# --- configuration ----------------------------------------------------------

class ConfigError(ExdetError):
    """Invalid run configuration; message names the offending field."""
