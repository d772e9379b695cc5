"""Exception hierarchy shared across pipeline stages."""


class KpiForgeError(Exception):
    """Base class for all package errors."""


class ConfigError(KpiForgeError):
    """Invalid or incomplete configuration."""


class RetryableFetchError(KpiForgeError):
    """A network operation failed but may succeed on retry.

    ``context`` carries whatever identifies the failed unit of work, e.g. the
    date range of an index listing or the URL of a document.
    """

    def __init__(self, message, context=None):
        super().__init__(message)
        self.context = context


class WrongLinkbaseKind(KpiForgeError):
    """A linkbase file does not contain links of the requested kind."""


class MixedKindError(KpiForgeError):
    """Edges of different relationship kinds were fed into one aggregation."""


class UnknownCompanyError(KpiForgeError, KeyError):
    """Requested a per-company view for a CIK with no edges."""


class CyclicTaxonomyError(KpiForgeError):
    """A taxonomy expected to be a forest contains a cycle."""


class MissingArtifactError(KpiForgeError):
    """An upstream stage artifact is absent or incomplete."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage
