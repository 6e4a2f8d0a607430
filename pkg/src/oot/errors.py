"""Exception types shared across the package."""


class OotError(Exception):
    """Base class for all errors raised by this package."""


# --- frontend ---

class ParseError(OotError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class ResolveError(OotError):
    """Unknown symbol ($name with no declaration)."""


class NoCodeAtLine(OotError):
    """No instruction maps to the requested source line."""


class DecodeError(OotError):
    """Malformed or truncated binary input (module blob, session stream, frame)."""


# --- vm ---

class UnboundImport(OotError):
    """Module declares an import the primitive table does not provide."""


class NoMainExport(OotError):
    """Module has no "main" function export."""


class BadState(OotError):
    """Operation not legal for the VM's current run status."""


# --- sessions ---

class ModuleMismatch(OotError):
    """Session hash does not identify the module loaded in the receiving VM."""


class CapacityExceeded(OotError):
    """Session is larger than the receiving VM's configured stack limits."""


# --- monitor / state edits ---

class MalformedInterrupt(OotError):
    """Interrupt payload does not decode under its opcode's schema."""


class KindMismatch(OotError):
    """State edit would replace a value with one of a different kind."""


class IndexOutOfRange(OotError):
    """State edit target index does not exist."""


class ImmutableGlobal(OotError):
    """State edit targets a global declared immutable."""


class ValidationFailed(OotError):
    """Module failed validation (carries the report findings)."""

    def __init__(self, findings):
        super().__init__("; ".join(str(f) for f in findings))
        self.findings = findings


# --- proxying ---

class NotAnImport(OotError):
    """Access strategies may only be attached to imported functions."""


class CacheEmpty(OotError):
    """Cache strategy selected for a function that was never remote-called."""


class CacheMiss(OotError):
    """No cached value for this (function, arguments) pair."""


class LinkUnavailable(OotError):
    """Remote strategy selected but the device link is down."""


# --- transport ---

class ConnectRefused(OotError):
    pass


class Timeout(OotError):
    pass


class Disconnected(OotError):
    """Peer closed the connection mid-stream."""
