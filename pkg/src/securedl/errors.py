class SecureDLError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SecureDLError, ValueError):
    pass


class EncodingRangeError(SecureDLError, ValueError):
    """A real value does not fit the fixed-point value domain."""


class ProtocolError(SecureDLError):
    """Shares or protocol messages are inconsistent (missing party, shape mismatch)."""


class PreprocessingExhausted(ProtocolError):
    def __init__(self, kind: str, requested: int, remaining: int):
        self.kind = kind
        self.requested = requested
        self.remaining = remaining
        super().__init__(
            f"dealer preprocessing exhausted for {kind!r}: "
            f"requested {requested}, {remaining} remaining"
        )


class IdxFormatError(SecureDLError, ValueError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")
