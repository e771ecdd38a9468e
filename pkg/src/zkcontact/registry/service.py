"""Registry server, client and transports."""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
from typing import Iterator

from . import wire
from .store import DEFAULT_PAGE, PublishResult, Registry, RegistryEntry

log = logging.getLogger(__name__)


class RegistryError(Exception):
    pass


def handle_request(registry: Registry, request: bytes) -> bytes:
    """Serve one request body and return the response body."""
    if not request:
        return wire.encode_error("empty request")
    op, rest = request[0], request[1:]
    if op == wire.OP_PUBLISH:
        return bytes([op]) + wire.encode_publish_result(registry.publish(rest))
    if op == wire.OP_QUERY:
        if len(rest) != 12:
            return wire.encode_error("bad query")
        cursor, limit = struct.unpack(">QI", rest)
        try:
            page, nxt = registry.query_since(cursor, max(limit, 1))
        except ValueError as e:
            return wire.encode_error(str(e))
        return bytes([op]) + wire.encode_page(page, nxt)
    return wire.encode_error(f"unknown op {op}")


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        while True:
            try:
                req = wire.read_frame(self.rfile)
            except EOFError:
                return
            except wire.FrameError as e:
                wire.write_frame(self.wfile, wire.encode_error(str(e)))
                return
            wire.write_frame(self.wfile, handle_request(self.server.registry, req))


class RegistryServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, registry: Registry, address=("127.0.0.1", 0)):
        super().__init__(address, _Handler)
        self.registry = registry

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="registry-server", daemon=True)
        t.start()
        return t


class LoopbackTransport:
    """In-process transport that still goes through the wire encoding."""

    def __init__(self, registry: Registry):
        self.registry = registry

    def roundtrip(self, request: bytes) -> bytes:
        return handle_request(self.registry, request)

    def close(self):
        pass


class TcpTransport:
    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rwb")
        self._lock = threading.Lock()

    def roundtrip(self, request: bytes) -> bytes:
        with self._lock:
            wire.write_frame(self._file, request)
            return wire.read_frame(self._file)

    def close(self):
        self._file.close()
        self._sock.close()


class RegistryClient:
    def __init__(self, transport):
        self.transport = transport

    def _call(self, request: bytes) -> bytes:
        resp = self.transport.roundtrip(request)
        if not resp or resp[0] == wire.OP_ERROR:
            raise RegistryError(resp[1:].decode(errors="replace") if resp else "empty response")
        if resp[0] != request[0]:
            raise RegistryError("response op does not match request")
        return resp[1:]

    def publish(self, body: bytes) -> PublishResult:
        return wire.decode_publish_result(self._call(wire.encode_publish(body)))

    def query_since(self, cursor: int = 0, limit: int = DEFAULT_PAGE) -> tuple[list[RegistryEntry], int]:
        return wire.decode_page(self._call(wire.encode_query(cursor, limit)))

    def iter_since(self, cursor: int = 0) -> Iterator[RegistryEntry]:
        while True:
            page, nxt = self.query_since(cursor)
            yield from page
            if not page:
                return
            cursor = nxt

    def close(self):
        self.transport.close()
