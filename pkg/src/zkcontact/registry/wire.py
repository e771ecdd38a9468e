"""Length-prefixed request/response framing for the registry service.

Frames are ``u32 length | body``, all integers big-endian. Requests start
with an op byte: PUBLISH carries a bundle, QUERY carries ``u64 cursor,
u32 limit``.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

from .store import EntryKind, PublishResult, PublishStatus, RegistryEntry

OP_PUBLISH = 1
OP_QUERY = 2
OP_ERROR = 0xFF
MAX_FRAME = 64 << 20


class FrameError(ValueError):
    pass


def write_frame(stream: BinaryIO, body: bytes) -> None:
    stream.write(struct.pack(">I", len(body)) + body)
    stream.flush()


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise EOFError("connection closed mid-frame" if buf else "connection closed")
        buf += chunk
    return buf


def read_frame(stream: BinaryIO) -> bytes:
    (n,) = struct.unpack(">I", _read_exact(stream, 4))
    if n > MAX_FRAME:
        raise FrameError(f"frame of {n} bytes exceeds limit")
    return _read_exact(stream, n)


def encode_publish(body: bytes) -> bytes:
    return bytes([OP_PUBLISH]) + body


def encode_query(cursor: int, limit: int) -> bytes:
    return bytes([OP_QUERY]) + struct.pack(">QI", cursor, limit)


def encode_publish_result(r: PublishResult) -> bytes:
    reason = r.reason.encode()
    return struct.pack(">BqH", r.status, r.seq, len(reason)) + reason


def decode_publish_result(data: bytes) -> PublishResult:
    status, seq, rlen = struct.unpack_from(">BqH", data)
    return PublishResult(PublishStatus(status), seq, data[11 : 11 + rlen].decode())


def encode_page(entries: list[RegistryEntry], next_cursor: int) -> bytes:
    parts = [struct.pack(">QI", next_cursor, len(entries))]
    for e in entries:
        parts.append(struct.pack(">QBQI", e.seq, e.kind, e.received_at, len(e.body)))
        parts.append(e.body)
    return b"".join(parts)


def decode_page(data: bytes) -> tuple[list[RegistryEntry], int]:
    from ..protocol import decode_bundle

    next_cursor, count = struct.unpack_from(">QI", data)
    pos, out = 12, []
    for _ in range(count):
        seq, kind, stamp, blen = struct.unpack_from(">QBQI", data, pos)
        pos += 21
        body = data[pos : pos + blen]
        if len(body) != blen:
            raise FrameError("truncated page")
        pos += blen
        out.append(RegistryEntry(seq, EntryKind(kind), decode_bundle(body).index_key, body, stamp))
    return out, next_cursor


def encode_error(msg: str) -> bytes:
    return bytes([OP_ERROR]) + msg.encode()
