import os
import random
import struct
import threading

import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, rule

import zkcontact.registry.service as service_mod
import zkcontact.registry.store as store_mod
from zkcontact.engine import DIRECT_WITNESS, PcdMessage, Proof
from zkcontact.circuits import CircuitKind
from zkcontact.protocol import ContactBundle, TransitiveBundle
from zkcontact.registry import (
    EntryKind,
    LoopbackTransport,
    PublishStatus,
    RecoveryError,
    Registry,
    RegistryClient,
    RegistryError,
    RegistryServer,
    TcpTransport,
    scan_log,
)
from zkcontact.registry import wire


def fake_contact(h: int, h_s: int = 5) -> bytes:
    """Structurally valid bundle whose proof is junk; the registry must not care."""
    proof = Proof(DIRECT_WITNESS, b"not a proof", (h, h_s), 8)
    return ContactBundle(proof, h, h_s, 12345).to_bytes()


def fake_transitive(h: int) -> bytes:
    proof = Proof(DIRECT_WITNESS, b"junk", (h,), 8)
    return TransitiveBundle(PcdMessage((h,), proof, CircuitKind.PCD_M1, 2)).to_bytes()


def test_publish_outcomes():
    r = Registry()
    assert r.publish(fake_contact(1)).status is PublishStatus.ACCEPTED
    dup = r.publish(fake_contact(1, h_s=9))
    assert dup.status is PublishStatus.DUPLICATE and dup.seq == 1
    assert r.publish(fake_contact(2)[:-2]).status is PublishStatus.INVALID
    assert r.publish(b"").status is PublishStatus.INVALID
    # one namespace across bundle kinds
    assert r.publish(fake_transitive(1)).status is PublishStatus.DUPLICATE
    assert r.publish(fake_transitive(3)).seq == 2
    assert len(r) == 2 and r.duplicates_rejected == 2
    assert [e.kind for e in r.entries()] == [EntryKind.CONTACT, EntryKind.TRANSITIVE]


def test_registry_is_oblivious():
    for mod in (store_mod, service_mod, wire):
        names = set(vars(mod))
        assert not {"verify", "pcd_verify", "check_bundle", "rsa3_verify"} & names


def test_query_since():
    r = Registry(page_limit=3)
    for h in range(1, 8):
        r.publish(fake_contact(h))
    page, nxt = r.query_since(0)
    assert [e.seq for e in page] == [1, 2, 3] and nxt == 3
    assert [e.seq for e in r.query_since(nxt)[0]] == [4, 5, 6]
    assert r.query_since(7) == ([], 7)
    assert [e.seq for e in r.query_since(5, limit=1)[0]] == [6]
    with pytest.raises(ValueError):
        r.query_since(-1)


def test_concurrent_same_key_first_write_wins():
    r = Registry()
    body = fake_contact(42)
    barrier = threading.Barrier(16)
    results = []

    def go():
        barrier.wait()
        results.append(r.publish(body).status)

    threads = [threading.Thread(target=go) for _ in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results.count(PublishStatus.ACCEPTED) == 1
    assert results.count(PublishStatus.DUPLICATE) == 15


@pytest.mark.parametrize("seed", range(5))
def test_concurrent_interleavings_match_model(seed, tmp_path):
    rnd = random.Random(seed)
    keys = [rnd.randrange(1, 60) for _ in range(300)]
    r = Registry(tmp_path / "log")
    outcomes: dict[int, list] = {}
    lock = threading.Lock()
    streams: list[list[int]] = [[] for _ in range(3)]
    done = threading.Event()

    def writer(chunk):
        for k in chunk:
            res = r.publish(fake_contact(k))
            with lock:
                outcomes.setdefault(k, []).append(res)

    def reader(i):
        cursor = 0
        while True:
            finished = done.is_set()
            page, cursor = r.query_since(cursor, limit=rnd.randrange(1, 8))
            streams[i].extend(e.seq for e in page)
            if finished and not page:
                return

    chunks = [keys[i::4] for i in range(4)]
    writers = [threading.Thread(target=writer, args=(c,)) for c in chunks]
    readers = [threading.Thread(target=reader, args=(i,)) for i in range(3)]
    for t in writers + readers:
        t.start()
    for t in writers:
        t.join()
    done.set()
    for t in readers:
        t.join()

    distinct = set(keys)
    entries = r.entries()
    # sequential model: one entry per distinct key, seqs 1..n
    assert sorted(e.key for e in entries) == sorted(distinct)
    assert [e.seq for e in entries] == list(range(1, len(distinct) + 1))
    for k, res in outcomes.items():
        acc = [x for x in res if x.status is PublishStatus.ACCEPTED]
        assert len(acc) == 1
        assert all(x.seq == acc[0].seq for x in res)
        assert r.lookup(k).seq == acc[0].seq
    for s in streams:
        assert s == list(range(1, len(distinct) + 1))
    r.close()
    assert [e.key for e in Registry(tmp_path / "log").entries()] == [e.key for e in entries]


class RegistryModel(RuleBasedStateMachine):
    """Registry vs. a dict-and-list model under arbitrary publish/query/restart sequences."""

    def __init__(self):
        super().__init__()
        import tempfile

        self.dir = tempfile.mkdtemp()
        self.path = os.path.join(self.dir, "log")
        self.reg = Registry(self.path, page_limit=4)
        self.model: list[int] = []

    @rule(k=st.integers(1, 20), kind=st.booleans())
    def publish(self, k, kind):
        body = fake_contact(k) if kind else fake_transitive(k)
        res = self.reg.publish(body)
        if k in self.model:
            assert res.status is PublishStatus.DUPLICATE and res.seq == self.model.index(k) + 1
        else:
            self.model.append(k)
            assert res.status is PublishStatus.ACCEPTED and res.seq == len(self.model)

    @rule(bad=st.binary(max_size=40))
    def publish_garbage(self, bad):
        assert self.reg.publish(bad).status is PublishStatus.INVALID

    @rule(cursor=st.integers(0, 25))
    def query(self, cursor):
        page, nxt = self.reg.query_since(cursor)
        expect = self.model[cursor : cursor + 4]
        assert [e.key for e in page] == expect
        assert nxt == (cursor + len(expect) if expect else cursor)

    @rule()
    def restart(self):
        self.reg.close()
        self.reg = Registry(self.path, page_limit=4)

    @invariant()
    def same_length(self):
        assert len(self.reg) == len(self.model)

    def teardown(self):
        self.reg.close()


TestRegistryModel = RegistryModel.TestCase
TestRegistryModel.settings = settings(max_examples=40, stateful_step_count=30, deadline=None)


# --- persistence -------------------------------------------------------------


def _filled(path, n=5):
    r = Registry(path)
    for h in range(1, n + 1):
        r.publish(fake_contact(h) if h % 2 else fake_transitive(h))
    snapshot = r.query_since(0)
    r.close()
    return snapshot


def test_restart_is_identical(tmp_path):
    path = tmp_path / "log"
    snap = _filled(path)
    with Registry(path) as r:
        assert r.query_since(0) == snap


def test_empty_file(tmp_path):
    path = tmp_path / "log"
    path.write_bytes(b"")
    with Registry(path) as r:
        assert len(r) == 0


def test_ack_implies_durable_without_close(tmp_path):
    path = tmp_path / "log"
    r = Registry(path, fsync=True)
    assert r.publish(fake_contact(9)).accepted
    # simulate a crash: never close, just reopen from disk
    assert Registry(path).lookup(9) is not None


def test_torn_tail_every_offset(tmp_path):
    path = tmp_path / "log"
    snap, _ = _filled(path)
    data = path.read_bytes()
    payloads, _ = scan_log(data)
    last_start = len(data) - (8 + len(payloads[-1]))
    for cut in range(last_start, len(data)):
        path.write_bytes(data[:cut])
        with Registry(path) as r:
            assert [e.key for e in r.entries()] == [e.key for e in snap[:-1]]
            assert r.discarded_tail_bytes == cut - last_start
            # the registry keeps working after recovery
            assert r.publish(fake_contact(snap[-1].key)).accepted
        assert path.stat().st_size == len(data)


def test_corrupt_tail_bytes_discarded(tmp_path):
    path = tmp_path / "log"
    snap, _ = _filled(path)
    data = path.read_bytes()
    payloads, _ = scan_log(data)
    last_start = len(data) - (8 + len(payloads[-1]))
    for i in range(last_start + 4, len(data)):
        raw = bytearray(data)
        raw[i] ^= 0x40
        path.write_bytes(bytes(raw))
        with Registry(path) as r:
            assert [e.key for e in r.entries()] == [e.key for e in snap[:-1]]


def test_corrupt_middle_record_refused(tmp_path):
    path = tmp_path / "log"
    _filled(path)
    data = path.read_bytes()
    first_len = struct.unpack_from(">I", data)[0]
    second = 8 + first_len
    raw = bytearray(data)
    raw[second + 12] ^= 1
    path.write_bytes(bytes(raw))
    with pytest.raises(RecoveryError) as e:
        Registry(path)
    assert e.value.offset == second


# --- wire and transports -----------------------------------------------------


def test_frame_roundtrip():
    import io

    buf = io.BytesIO()
    wire.write_frame(buf, b"hello")
    wire.write_frame(buf, b"")
    buf.seek(0)
    assert wire.read_frame(buf) == b"hello"
    assert wire.read_frame(buf) == b""
    with pytest.raises(EOFError):
        wire.read_frame(buf)
    with pytest.raises(EOFError):
        wire.read_frame(io.BytesIO(b"\x00\x00\x00\x05abc"))
    with pytest.raises(wire.FrameError):
        wire.read_frame(io.BytesIO(struct.pack(">I", wire.MAX_FRAME + 1)))


def test_loopback_client():
    r = Registry()
    c = RegistryClient(LoopbackTransport(r))
    assert c.publish(fake_contact(1)).accepted
    assert c.publish(fake_contact(1)).status is PublishStatus.DUPLICATE
    assert c.publish(b"junk").status is PublishStatus.INVALID
    page, nxt = c.query_since(0)
    assert [e.key for e in page] == [1] and nxt == 1
    with pytest.raises(RegistryError):
        c._call(bytes([9]))


def test_tcp_server_roundtrip(tmp_path):
    r = Registry(tmp_path / "log", page_limit=2)
    srv = RegistryServer(r)
    srv.start_background()
    try:
        clients = [RegistryClient(TcpTransport(*srv.address)) for _ in range(3)]
        for i, c in enumerate(clients):
            for h in range(i * 10, i * 10 + 5):
                assert c.publish(fake_contact(h + 1)).accepted
        got = [e.key for e in clients[0].iter_since(0)]
        assert sorted(got) == sorted(h + 1 for i in range(3) for h in range(i * 10, i * 10 + 5))
        assert [e.seq for e in clients[1].iter_since(0)] == list(range(1, 16))
        for c in clients:
            c.close()
    finally:
        srv.shutdown()
        srv.server_close()
        r.close()
