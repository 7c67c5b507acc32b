"""Exception hierarchy shared by all pipeline stages.

Errors are grouped by stage so the CLI can map failures to exit codes
without inspecting messages.
"""

from __future__ import annotations


class BioimagePubError(Exception):
    """Base class for every error raised by this package."""


class ConfigInvalid(BioimagePubError):
    """Pipeline configuration is malformed or inconsistent."""


# --- source ingestion ---------------------------------------------------


class SourceError(BioimagePubError):
    """Base class for source enumeration / fetch failures."""


class SourceUnreachable(SourceError):
    """Network or permission failure talking to a source (after retries)."""


class EmptySource(SourceError):
    """The source exists but contains zero entries."""


class SelectorMatchesNothing(SourceError):
    """A partial selector reduced a non-empty inventory to zero entries."""


class EntryChanged(SourceError):
    """An entry's size or etag no longer matches; the source mutated mid-run."""


# --- image conversion ---------------------------------------------------


class ConversionError(BioimagePubError):
    """Base class for decode/encode failures."""


class UnsupportedFormat(ConversionError):
    """Input bytes are not a format this pipeline can decode."""


class CorruptImage(ConversionError):
    """Recognized format, but the stream is damaged or inconsistent."""


class ZeroPixel(ConversionError):
    """Image declares a zero width or height."""


class PolicyMismatch(ConversionError):
    """Conversion policy cannot represent this image (e.g. 5-channel unsplit PNG)."""


# --- metadata ------------------------------------------------------------


class MetadataError(BioimagePubError):
    """Base class for annotation / manifest / card / croissant failures."""


class MissingKeyColumn(MetadataError):
    """The requested key column does not exist in an annotation table."""


class MalformedTable(MetadataError):
    """An annotation table has ragged rows or no header."""


class NoSuchImage(MetadataError):
    """An image id was not found on the annotation server."""


class DuplicateFileName(MetadataError):
    """Two images map to the same manifest file_name within one split."""


class EmptyManifestSet(MetadataError):
    """Croissant generation was asked to describe zero manifests."""


class NotJson(MetadataError):
    """Bytes handed to the croissant validator do not parse as JSON."""


class MissingRequiredField(MetadataError):
    """A required dataset-card field is unanswered in non-interactive mode."""


class UnknownAccession(MetadataError):
    """The study accession was not found upstream (404)."""


# --- hub upload -----------------------------------------------------------


class HubError(BioimagePubError):
    """Hub returned an unexpected error status (after retries)."""


class AuthFailed(HubError):
    """Hub rejected our credentials (401/403)."""


class PathCollision(HubError):
    """Two planned files normalize to the same repo path."""


class PartialUpload(HubError):
    """Some LFS transfers failed after retries; the commit was not attempted."""

    def __init__(self, message: str, failed: list[str] | None = None):
        super().__init__(message)
        self.failed = failed or []


class UploadInProgress(HubError):
    """Another upload to the same repo/revision is already running."""


class BudgetBlocked(BioimagePubError):
    """Plan exceeds the size budget and no acknowledgement flag was given."""


# --- mock hub --------------------------------------------------------------


class PortUnavailable(BioimagePubError):
    """The requested listen port could not be bound."""
