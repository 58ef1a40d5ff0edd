"""Exception hierarchy shared by every module."""


class FairnessError(Exception):
    """Base class for all errors raised by causalfair."""


class ConfigError(FairnessError):
    """Invalid configuration, role assignment or query."""


class DataError(FairnessError):
    """Unreadable, malformed or empty data."""


class CardinalityError(FairnessError):
    """A joint state space exceeds the configured cap."""


class UnidentifiableCellError(FairnessError):
    """A query needs a conditional whose conditioning event has zero mass (alpha=0)."""


class IdentityError(FairnessError):
    """A decomposition identity failed; this indicates a bug, not a data condition."""


class ReportError(FairnessError):
    """Invalid report bundle or prompt fixture."""


class LLMError(FairnessError):
    """Base class for failures talking to the reporting endpoint."""


class MissingCredentialError(LLMError):
    pass


class EndpointTimeoutError(LLMError):
    pass


class EndpointStatusError(LLMError):
    def __init__(self, status_code: int, body: str):
        super().__init__(f"endpoint returned HTTP {status_code}: {body[:200]}")
        self.status_code = status_code
        self.body = body


class EndpointNetworkError(LLMError):
    pass
