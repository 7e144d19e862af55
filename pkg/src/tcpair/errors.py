"""Exception hierarchy shared by every layer."""


class TcpAirError(Exception):
    pass


# ledger
class LedgerError(TcpAirError):
    pass


class StaleTimestamp(LedgerError):
    pass


class EmptyChain(LedgerError):
    pass


class GenesisMismatch(LedgerError):
    pass


class InvalidInput(LedgerError):
    pass


class NotFound(LedgerError, LookupError):
    pass


class NoContractOnChain(LedgerError):
    pass


# identity
class IdentityError(TcpAirError):
    pass


class InvalidGroup(IdentityError):
    pass


class GroupMismatch(IdentityError):
    pass


class InvalidPublicKey(IdentityError):
    pass


class HostMismatch(IdentityError):
    pass


# spectrum
class SpectrumError(TcpAirError):
    pass


class OutOfRange(SpectrumError):
    pass


class InsufficientAnchors(SpectrumError):
    pass


class DegenerateGeometry(SpectrumError):
    pass


class InsufficientSamples(SpectrumError):
    pass


class NonMonotonicTime(SpectrumError):
    pass


class NotSupplicated(SpectrumError):
    pass


class NoRegisteredAps(SpectrumError):
    pass


# configuration
class ConfigError(TcpAirError):
    """Invalid scenario configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class ValidationError(ConfigError):
    pass


class ParseError(ConfigError):
    def __init__(self, path: str, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(path, message)
