"""Exception hierarchy shared across the pipeline.

Three failure families map to CLI exit codes: data problems (bad manifests,
bad galleries, bad parameters) exit 2, provider failures exit 3, and
face/landmark failures on otherwise valid data exit 4.
"""


class WildfaceError(Exception):
    """Base class for all errors raised by this package."""


class DataError(WildfaceError):
    """Invalid input data: manifests, parameters, gallery files, fixtures."""


class NoFaceError(WildfaceError):
    """No face was detected in an image."""


class LandmarkNotFoundError(WildfaceError):
    """A landmark mask channel contains no lit pixels."""

    def __init__(self, channel: str):
        super().__init__(f"landmark not found: empty mask channel '{channel}'")
        self.channel = channel


class DegenerateLandmarksError(WildfaceError):
    """Eye centers coincide or are otherwise unusable for alignment."""


class ProviderError(WildfaceError):
    """A detector/segmenter/embedder provider failed."""


class GalleryFormatError(DataError):
    """Gallery file is not in the expected binary format."""


class GalleryVersionError(GalleryFormatError):
    """Gallery file carries an unsupported format version."""


class GalleryDimensionError(GalleryFormatError):
    """Embedding dimensions are inconsistent within a gallery."""


class GalleryTruncatedError(GalleryFormatError):
    """Gallery file ended before the declared entry count was read."""


EXIT_OK = 0
EXIT_DATA_ERROR = 2
EXIT_PROVIDER_ERROR = 3
EXIT_FACE_ERROR = 4


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code for its failure class."""
    if isinstance(exc, (NoFaceError, LandmarkNotFoundError, DegenerateLandmarksError)):
        return EXIT_FACE_ERROR
    if isinstance(exc, ProviderError):
        return EXIT_PROVIDER_ERROR
    if isinstance(exc, DataError):
        return EXIT_DATA_ERROR
    return 1
