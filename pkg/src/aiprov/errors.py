"""Exception hierarchy shared by every layer of the package.

Contract failures double as revert reasons: a reverted receipt stores the
exception class name, and :func:`error_for_reason` maps it back.
"""

from __future__ import annotations


class AiprovError(Exception):
    """Base class for all protocol-level errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


class ConfigError(AiprovError):
    """Invalid or unresolvable configuration (a usage error at the CLI)."""


# ledger ---------------------------------------------------------------------

class LedgerError(AiprovError):
    pass


class BadNonce(LedgerError):
    pass


class GasLimitExceeded(LedgerError):
    pass


class UnknownFunction(LedgerError):
    pass


class ChainCorrupted(LedgerError):
    pass


# contract (revert reasons) --------------------------------------------------

class ContractError(AiprovError):
    pass


class AssetExists(ContractError):
    pass


class UnknownParent(ContractError):
    pass


class MalformedMetadata(ContractError):
    pass


class UnknownAsset(ContractError):
    pass


class NotMaintainer(ContractError):
    pass


class UnknownAccount(ContractError):
    pass


class MalformedArguments(ContractError):
    pass


# exchange -------------------------------------------------------------------

class CryptoError(AiprovError):
    pass


class DecryptionFailed(CryptoError):
    pass


class UnsupportedAlgorithm(CryptoError):
    pass


class UnsealFailed(CryptoError):
    pass


# storage --------------------------------------------------------------------

class StorageError(AiprovError):
    pass


class StoreUnavailable(StorageError):
    pass


class NotFound(StorageError):
    pass


class IntegrityMismatch(StorageError):
    pass


# provenance / client --------------------------------------------------------

class InconsistentLogs(AiprovError):
    pass


class ClientError(AiprovError):
    pass


class RegistrationAborted(ClientError):
    pass


class DuplicateRequest(ClientError):
    pass


class NoPendingRequest(ClientError):
    pass


class MissingAEK(ClientError):
    pass


class NotGranted(ClientError):
    pass


class HashMismatch(ClientError):
    pass


_REVERT_REASONS = {cls.__name__: cls for cls in ContractError.__subclasses__()}


def error_for_reason(reason: str, message: str = "") -> ContractError:
    """Rebuild the exception for a revert reason stored in a receipt."""
    cls = _REVERT_REASONS.get(reason, ContractError)
    return cls(message or reason)
