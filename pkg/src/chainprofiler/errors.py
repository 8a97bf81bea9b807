"""Exception types raised across the package."""


class ChainProfilerError(Exception):
    """Base class for all package errors."""


class MalformedRow(ChainProfilerError, ValueError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DuplicateTxHash(ChainProfilerError, ValueError):
    pass


class EmptyFile(ChainProfilerError, ValueError):
    pass


class RateLimited(ChainProfilerError):
    pass


class HttpError(ChainProfilerError):
    def __init__(self, status, message=""):
        self.status = status
        super().__init__(f"HTTP {status} {message}".strip())


class ApiError(ChainProfilerError):
    pass


class EmptyInput(ChainProfilerError, ValueError):
    pass


class MissingDay(ChainProfilerError, KeyError):
    def __init__(self, date):
        self.date = date
        super().__init__(f"no daily average gas price for {date}")

    def __str__(self):
        return self.args[0]


class EmptyGraph(ChainProfilerError, ValueError):
    pass


class CoverTooLarge(UserWarning):
    """Emitted when the requested diffusion cover exceeds the component size."""


class EmptySequences(ChainProfilerError, ValueError):
    pass


class MismatchedCandidates(ChainProfilerError, ValueError):
    pass


class DimensionMismatch(ChainProfilerError, ValueError):
    pass


class MissingFeatures(ChainProfilerError, KeyError):
    def __init__(self, address):
        self.address = address
        super().__init__(f"no features for {address}")

    def __str__(self):
        return self.args[0]


class EmptyResults(ChainProfilerError, ValueError):
    pass


class EmptyLedger(ChainProfilerError, ValueError):
    pass


class DegenerateSample(ChainProfilerError, ValueError):
    pass


class NonConvergent(ChainProfilerError, ValueError):
    pass


class ConfigInvalid(ChainProfilerError, ValueError):
    pass
