"""Append-only bundle registry with crash recovery.

On disk every record is ``u32 length | u32 crc32 | payload`` (big-endian),
where the payload is ``u64 received_at_us | bundle``.
A torn final record, either short or failing its checksum, is dropped on
open. Damage anywhere before the final record is refused.
"""

from __future__ import annotations

import enum
import os
import struct
import threading
import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from ..protocol import ContactBundle, InvalidBundle, decode_bundle

_HEADER = struct.Struct(">II")
_STAMP = struct.Struct(">Q")
DEFAULT_PAGE = 1000


class RecoveryError(Exception):
    def __init__(self, offset: int, reason: str):
        super().__init__(f"log damaged at byte {offset}: {reason}")
        self.offset = offset
        self.reason = reason


class EntryKind(enum.IntEnum):
    CONTACT = 1
    TRANSITIVE = 2


@dataclass(frozen=True)
class RegistryEntry:
    seq: int
    kind: EntryKind
    key: int
    body: bytes
    # informational wall-clock time in microseconds, never used by the protocol
    received_at: int = 0


class PublishStatus(enum.IntEnum):
    ACCEPTED = 0
    DUPLICATE = 1
    INVALID = 2


@dataclass(frozen=True)
class PublishResult:
    status: PublishStatus
    seq: int = -1
    reason: str = ""

    @property
    def accepted(self) -> bool:
        return self.status is PublishStatus.ACCEPTED


def _classify(body: bytes) -> tuple[EntryKind, int]:
    bundle = decode_bundle(body)
    kind = EntryKind.CONTACT if isinstance(bundle, ContactBundle) else EntryKind.TRANSITIVE
    return kind, bundle.index_key


def encode_record(payload: bytes) -> bytes:
    return _HEADER.pack(len(payload), zlib.crc32(payload)) + payload


def scan_log(data: bytes) -> tuple[list[bytes], int]:
    """Split a log image into payloads and the length of its intact prefix."""
    out, pos, n = [], 0, len(data)
    while pos < n:
        if pos + _HEADER.size > n:
            break
        length, crc = _HEADER.unpack_from(data, pos)
        end = pos + _HEADER.size + length
        if end > n:
            break
        payload = data[pos + _HEADER.size : end]
        if zlib.crc32(payload) != crc:
            if end == n:
                break
            raise RecoveryError(pos, "checksum mismatch")
        out.append(payload)
        pos = end
    return out, pos


class Registry:
    """Public bulletin board of bundles, keyed and deduplicated by digest.

    With ``path`` set, every accepted bundle is appended to a log file and
    the registry is rebuilt from it on construction. Sequence numbers start
    at 1, so cursor 0 means "from the beginning". ``clock`` returns seconds
    and only feeds ``received_at``.
    """

    def __init__(
        self,
        path: Optional[str | os.PathLike] = None,
        *,
        fsync: bool = False,
        page_limit: int = DEFAULT_PAGE,
        clock: Callable[[], float] = time.time,
    ):
        self._lock = threading.Lock()
        self.page_limit = page_limit
        self.clock = clock
        self.duplicates_rejected = 0
        self._entries: list[RegistryEntry] = []
        self._index: dict[int, int] = {}
        self.path = Path(path) if path is not None else None
        self.fsync = fsync
        self._fh = None
        self.discarded_tail_bytes = 0
        if self.path is not None:
            self._recover()
            self._fh = open(self.path, "ab")

    def _recover(self) -> None:
        data = self.path.read_bytes() if self.path.exists() else b""
        payloads, intact = scan_log(data)
        for off, payload in zip(_offsets(payloads), payloads):
            if len(payload) < _STAMP.size:
                raise RecoveryError(off, "record too short")
            (stamp,) = _STAMP.unpack_from(payload)
            body = payload[_STAMP.size :]
            try:
                kind, key = _classify(body)
            except InvalidBundle as e:
                raise RecoveryError(off, f"undecodable bundle ({e})") from None
            if key in self._index:
                raise RecoveryError(off, "duplicate key in log")
            self._append_mem(kind, key, body, stamp)
        if intact < len(data):
            self.discarded_tail_bytes = len(data) - intact
            with open(self.path, "r+b") as fh:
                fh.truncate(intact)

    def _append_mem(self, kind: EntryKind, key: int, body: bytes, stamp: int) -> RegistryEntry:
        e = RegistryEntry(len(self._entries) + 1, kind, key, body, stamp)
        self._entries.append(e)
        self._index[key] = e.seq
        return e

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __len__(self) -> int:
        return len(self._entries)

    def publish(self, body: bytes) -> PublishResult:
        try:
            kind, key = _classify(body)
        except InvalidBundle as e:
            return PublishResult(PublishStatus.INVALID, reason=str(e))
        with self._lock:
            if key in self._index:
                self.duplicates_rejected += 1
                return PublishResult(PublishStatus.DUPLICATE, self._index[key])
            stamp = int(self.clock() * 1_000_000)
            if self._fh is not None:
                self._fh.write(encode_record(_STAMP.pack(stamp) + body))
                self._fh.flush()
                if self.fsync:
                    os.fsync(self._fh.fileno())
            e = self._append_mem(kind, key, body, stamp)
        return PublishResult(PublishStatus.ACCEPTED, e.seq)

    def query_since(self, cursor: int = 0, limit: Optional[int] = None) -> tuple[list[RegistryEntry], int]:
        """Entries with ``seq > cursor`` in order, at most one page, and the next cursor."""
        limit = self.page_limit if limit is None else min(limit, self.page_limit)
        if cursor < 0 or limit <= 0:
            raise ValueError("cursor must be >= 0 and limit > 0")
        # committed entries are never mutated, so a slice is a consistent snapshot
        page = self._entries[cursor : cursor + limit]
        return page, page[-1].seq if page else cursor

    def lookup(self, key: int) -> Optional[RegistryEntry]:
        with self._lock:
            seq = self._index.get(key)
            return None if seq is None else self._entries[seq - 1]

    def entries(self) -> list[RegistryEntry]:
        with self._lock:
            return list(self._entries)


def _offsets(payloads: list[bytes]):
    pos = 0
    for p in payloads:
        yield pos
        pos += _HEADER.size + len(p)
