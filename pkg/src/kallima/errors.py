"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, TransportError -> 3,
DataError -> 4.
"""


class KallimaError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(KallimaError):
    """Invalid or unusable run configuration."""


class DataError(KallimaError):
    """Malformed, missing, or inconsistent data (corpus rows, ids, annotations)."""


class TransportError(KallimaError):
    """A remote provider call failed (network, non-200, bad payload)."""

    def __init__(self, endpoint: str, detail: str):
        super().__init__(f"{endpoint}: {detail}")
        self.endpoint = endpoint
        self.detail = detail
