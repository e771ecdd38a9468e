from .service import LoopbackTransport, RegistryClient, RegistryError, RegistryServer, TcpTransport, handle_request
from .store import (
    DEFAULT_PAGE,
    EntryKind,
    PublishResult,
    PublishStatus,
    RecoveryError,
    Registry,
    RegistryEntry,
    scan_log,
)

__all__ = [
    "DEFAULT_PAGE",
    "EntryKind",
    "LoopbackTransport",
    "PublishResult",
    "PublishStatus",
    "RecoveryError",
    "Registry",
    "RegistryClient",
    "RegistryEntry",
    "RegistryError",
    "RegistryServer",
    "TcpTransport",
    "handle_request",
    "scan_log",
]
