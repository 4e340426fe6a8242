class GoesFetchError(Exception):
    pass


class NetworkError(GoesFetchError):
    """Archive listing or download failed after retries."""


class SiteOutsideCoverage(GoesFetchError):
    """The site is not on the imaged disk or too far from any pixel."""


class CorruptFile(GoesFetchError):
    """An archive file is unreadable or missing required variables."""


class FormatViolation(GoesFetchError):
    """The converter refuses to emit an invalid site cube."""
