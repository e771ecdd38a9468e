"""Proof backend interface (generate / prove / verify) and proof-carrying data.

The shipped backend, ``direct-witness``, is a reference implementation only.
Its proof payload is the full satisfying assignment and verification re-runs
the constraint check. That makes it sound and complete but neither succinct
nor zero-knowledge: anything published with it leaks the witness, including
secrets and tokens. A real SNARK backend slots in behind the same calls.

PCD under this backend embeds each verified predecessor message in the
payload; verifying a message re-verifies the whole chain natively.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Optional, Sequence

from .circuits import CircuitKind, CircuitSpec, deserialize_spec, serialize_spec
from .r1cs import Assignment, DimensionError, circuit_digest, cs_check

log = logging.getLogger(__name__)

DIRECT_WITNESS = "direct-witness/v1"
MAX_CHAIN_DEPTH = 64

PROOF_MAGIC = b"ZKPF"
PROOF_VERSION = 1
MSG_MAGIC = b"PCDM"
MSG_VERSION = 1
_KEY_MAGIC = b"DWK1"
_PAYLOAD_MAGIC = b"DWP1"
_PCD_MAGIC = b"DWPC"


class ProveError(Exception):
    """The prover refuses: the statement is not satisfied."""


class MalformedProof(ValueError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    security_parameter: int = 128
    backend_id: str = DIRECT_WITNESS

    def __post_init__(self):
        if self.security_parameter < 80:
            raise ValueError("security parameter must be at least 80 bits")


@dataclass(frozen=True)
class KeyPair:
    proving_key: bytes
    verifying_key: bytes
    circuit_digest: bytes


@dataclass(frozen=True)
class Proof:
    backend_id: str
    payload: bytes
    public_inputs: tuple[int, ...]
    elem_width: int

    def to_bytes(self, redact_payload: bool = False) -> bytes:
        bid = self.backend_id.encode()
        payload = b"" if redact_payload else self.payload
        parts = [
            PROOF_MAGIC,
            struct.pack(">HH", PROOF_VERSION, len(bid)),
            bid,
            struct.pack(">HI", self.elem_width, len(self.public_inputs)),
        ]
        parts.extend(v.to_bytes(self.elem_width, "big") for v in self.public_inputs)
        parts.append(struct.pack(">I", len(payload)))
        parts.append(payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Proof":
        proof, used = cls.read(data, 0)
        if used != len(data):
            raise MalformedProof("trailing bytes after proof")
        return proof

    @classmethod
    def read(cls, data: bytes, pos: int) -> tuple["Proof", int]:
        try:
            if data[pos : pos + 4] != PROOF_MAGIC:
                raise MalformedProof("bad proof magic")
            version, blen = struct.unpack_from(">HH", data, pos + 4)
            if version != PROOF_VERSION:
                raise MalformedProof(f"unsupported proof version {version}")
            pos += 8
            bid = data[pos : pos + blen].decode()
            pos += blen
            width, count = struct.unpack_from(">HI", data, pos)
            pos += 6
            if width == 0 or pos + width * count > len(data):
                raise MalformedProof("truncated public inputs")
            pub = tuple(
                int.from_bytes(data[pos + i * width : pos + (i + 1) * width], "big") for i in range(count)
            )
            pos += width * count
            (plen,) = struct.unpack_from(">I", data, pos)
            pos += 4
            if pos + plen > len(data):
                raise MalformedProof("truncated payload")
            payload = bytes(data[pos : pos + plen])
            return cls(bid, payload, pub, width), pos + plen
        except (struct.error, UnicodeDecodeError) as e:
            raise MalformedProof(str(e)) from e


# ---------------------------------------------------------------------------
# Direct-witness backend


@lru_cache(maxsize=64)
def _load_key(key: bytes) -> tuple[bytes, bytes, CircuitSpec]:
    if key[:4] != _KEY_MAGIC:
        raise MalformedProof("not a direct-witness key")
    role = key[4:5]
    digest = key[5:37]
    spec = deserialize_spec(key[37:])
    if circuit_digest(spec.cs) != digest:
        raise MalformedProof("key digest does not match its circuit")
    return role, digest, spec


def key_circuit(key: bytes) -> CircuitSpec:
    """The circuit a direct-witness key was generated for."""
    return _load_key(key)[2]


def _encode_aux(aux: Sequence[int], width: int) -> bytes:
    return struct.pack(">I", len(aux)) + b"".join(v.to_bytes(width, "big") for v in aux)


def _decode_aux(data: bytes, pos: int, width: int) -> tuple[tuple[int, ...], int]:
    (n,) = struct.unpack_from(">I", data, pos)
    pos += 4
    end = pos + n * width
    if end > len(data):
        raise MalformedProof("truncated witness")
    aux = tuple(int.from_bytes(data[pos + i * width : pos + (i + 1) * width], "big") for i in range(n))
    return aux, end


class DirectWitnessBackend:
    backend_id = DIRECT_WITNESS

    def generate_keys(self, cfg: BackendConfig, circuit: CircuitSpec) -> KeyPair:
        digest = circuit_digest(circuit.cs)
        body = digest + serialize_spec(circuit)
        return KeyPair(_KEY_MAGIC + b"P" + body, _KEY_MAGIC + b"V" + body, digest)

    def prove(self, pk: bytes, public: Sequence[int], witness: Sequence[int]) -> Proof:
        role, digest, spec = _load_key(pk)
        if role != b"P":
            raise ValueError("not a proving key")
        field = spec.cs.field
        public = tuple(public)
        witness = tuple(witness)
        try:
            ok = cs_check(spec.cs, Assignment(public, witness))
        except DimensionError as e:
            raise ProveError(str(e)) from e
        if not ok:
            raise ProveError(f"{spec.kind.value} witness does not satisfy the circuit")
        payload = _PAYLOAD_MAGIC + digest + _encode_aux(witness, field.byte_len)
        return Proof(self.backend_id, payload, public, field.byte_len)

    def _open(self, vk: bytes, public: Sequence[int], proof: Proof):
        role, digest, spec = _load_key(vk)
        if role != b"V":
            raise MalformedProof("not a verifying key")
        if proof.backend_id != self.backend_id:
            raise MalformedProof("proof from another backend")
        data = proof.payload
        if data[:4] != _PAYLOAD_MAGIC or data[4:36] != digest:
            raise MalformedProof("proof is bound to a different circuit")
        width = spec.cs.field.byte_len
        aux, end = _decode_aux(data, 36, width)
        return spec, aux, end

    def verify(self, vk: bytes, public: Sequence[int], proof: Proof) -> bool:
        try:
            spec, aux, end = self._open(vk, public, proof)
            if end != len(proof.payload):
                return False
            return self._check(spec, public, proof, aux)
        except (MalformedProof, DimensionError, struct.error, ValueError) as e:
            log.debug("proof rejected: %s", e)
            return False

    def _check(self, spec: CircuitSpec, public, proof: Proof, aux) -> bool:
        public = tuple(public)
        if public != proof.public_inputs:
            return False
        if proof.elem_width != spec.cs.field.byte_len:
            return False
        if any(not 0 <= v < spec.cs.p for v in public + aux):
            return False
        return cs_check(spec.cs, Assignment(public, aux))


_BACKENDS = {DIRECT_WITNESS: DirectWitnessBackend()}


def get_backend(backend_id: str) -> DirectWitnessBackend:
    try:
        return _BACKENDS[backend_id]
    except KeyError:
        raise ValueError(f"unknown proof backend {backend_id!r}") from None


def generate_keys(cfg: BackendConfig, circuit: CircuitSpec) -> KeyPair:
    return get_backend(cfg.backend_id).generate_keys(cfg, circuit)


def prove(pk: bytes, public: Sequence[int], witness: Sequence[int], backend_id: str = DIRECT_WITNESS) -> Proof:
    return get_backend(backend_id).prove(pk, public, witness)


def verify(vk: bytes, public: Sequence[int], proof: Proof) -> bool:
    try:
        backend = get_backend(proof.backend_id)
    except ValueError:
        return False
    return backend.verify(vk, public, proof)


# ---------------------------------------------------------------------------
# Proof-carrying data


@dataclass(frozen=True)
class PcdMessage:
    """Outgoing message ``z`` with its compliance proof; ``depth`` counts hops from the root."""

    z: tuple[int, ...]
    proof: Proof
    predicate: CircuitKind
    depth: int

    def __post_init__(self):
        if tuple(self.z) != self.proof.public_inputs:
            raise ValueError("message z must equal the proof's public inputs")

    def to_bytes(self, redact_payload: bool = False) -> bytes:
        kind = self.predicate.value.encode()
        proof = self.proof.to_bytes(redact_payload)
        return b"".join(
            [
                MSG_MAGIC,
                struct.pack(">HH", MSG_VERSION, len(kind)),
                kind,
                struct.pack(">HI", self.depth, len(proof)),
                proof,
            ]
        )

    @classmethod
    def read(cls, data: bytes, pos: int = 0) -> tuple["PcdMessage", int]:
        try:
            if data[pos : pos + 4] != MSG_MAGIC:
                raise MalformedProof("bad message magic")
            version, klen = struct.unpack_from(">HH", data, pos + 4)
            if version != MSG_VERSION:
                raise MalformedProof(f"unsupported message version {version}")
            pos += 8
            kind = CircuitKind(data[pos : pos + klen].decode())
            pos += klen
            depth, plen = struct.unpack_from(">HI", data, pos)
            pos += 6
            if pos + plen > len(data):
                raise MalformedProof("truncated message proof")
            proof = Proof.from_bytes(bytes(data[pos : pos + plen]))
            return cls(proof.public_inputs, proof, kind, depth), pos + plen
        except (struct.error, UnicodeDecodeError, ValueError) as e:
            raise MalformedProof(str(e)) from e

    @classmethod
    def from_bytes(cls, data: bytes) -> "PcdMessage":
        msg, end = cls.read(data)
        if end != len(data):
            raise MalformedProof("trailing bytes after message")
        return msg


@dataclass(frozen=True)
class PcdVerifyingKey:
    vks: Mapping[CircuitKind, bytes]
    # commitments of the registered authority keys accepted at chain roots
    authority_commitments: frozenset[int]


@dataclass(frozen=True)
class PcdProvingKey:
    pks: Mapping[CircuitKind, bytes]
    vk: PcdVerifyingKey


BASE_PREDICATE = CircuitKind.PCD_M0
STEP_PREDICATE = CircuitKind.PCD_M1


def pcd_generate(
    cfg: BackendConfig, predicates: Sequence[CircuitSpec], authority_commitments
) -> tuple[PcdProvingKey, PcdVerifyingKey]:
    """One keypair per compliance predicate, sharing a verifying key set."""
    pks, vks = {}, {}
    for spec in predicates:
        kp = generate_keys(cfg, spec)
        pks[spec.kind] = kp.proving_key
        vks[spec.kind] = kp.verifying_key
    vk = PcdVerifyingKey(vks, frozenset(authority_commitments))
    return PcdProvingKey(pks, vk), vk


def _encode_pcd_payload(local: bytes, preds: Sequence[PcdMessage]) -> bytes:
    parts = [_PCD_MAGIC, struct.pack(">I", len(local)), local, struct.pack(">H", len(preds))]
    for m in preds:
        raw = m.to_bytes()
        parts.append(struct.pack(">I", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def _decode_pcd_payload(data: bytes) -> tuple[bytes, list[PcdMessage]]:
    if data[:4] != _PCD_MAGIC:
        raise MalformedProof("not a PCD payload")
    (llen,) = struct.unpack_from(">I", data, 4)
    local = data[8 : 8 + llen]
    pos = 8 + llen
    if len(local) != llen:
        raise MalformedProof("truncated local proof")
    (count,) = struct.unpack_from(">H", data, pos)
    pos += 2
    preds = []
    for _ in range(count):
        (mlen,) = struct.unpack_from(">I", data, pos)
        pos += 4
        if pos + mlen > len(data):
            raise MalformedProof("truncated predecessor")
        preds.append(PcdMessage.from_bytes(data[pos : pos + mlen]))
        pos += mlen
    if pos != len(data):
        raise MalformedProof("trailing bytes in PCD payload")
    return local, preds


def _compliance_error(
    vk: PcdVerifyingKey, predicate: CircuitKind, z_out, z_loc, incoming: Sequence[PcdMessage]
) -> Optional[str]:
    """Why (z_in, z_loc, z_out) is not compliant, or None if it is."""
    if predicate not in vk.vks:
        return f"predicate {predicate.value} is not registered"
    spec = key_circuit(vk.vks[predicate])
    if predicate is BASE_PREDICATE:
        if incoming:
            return "base predicate takes no incoming messages"
        if z_out[2] not in vk.authority_commitments:
            return "authority key is not registered"
        return None
    if predicate is STEP_PREDICATE:
        if len(incoming) != 1:
            return "step predicate needs exactly one predecessor"
        (pred,) = incoming
        if pred.depth + 1 > MAX_CHAIN_DEPTH:
            return "chain too deep"
        if spec.pcd_input_slot is None or spec.pcd_input_slot >= len(z_loc):
            return "predicate has no input slot"
        if z_loc[spec.pcd_input_slot] != pred.z[0]:
            return "local input does not match the predecessor's output"
        return None
    return f"{predicate.value} is not a PCD predicate"


def pcd_prove(
    pk: PcdProvingKey,
    predicate: CircuitKind,
    z_in: Sequence[PcdMessage],
    z_loc: Sequence[int],
    z_out: Sequence[int],
) -> PcdMessage:
    """Prove that z_out is compliant given verified incoming messages and local data."""
    for m in z_in:
        if not pcd_verify(pk.vk, m):
            raise ProveError("incoming message does not verify")
    why = _compliance_error(pk.vk, predicate, tuple(z_out), tuple(z_loc), z_in)
    if why:
        raise ProveError(why)
    local = prove(pk.pks[predicate], z_out, z_loc)
    depth = 1 if not z_in else z_in[0].depth + 1
    payload = _encode_pcd_payload(local.payload, z_in)
    proof = Proof(local.backend_id, payload, tuple(z_out), local.elem_width)
    return PcdMessage(tuple(z_out), proof, predicate, depth)


def pcd_verify(vk: PcdVerifyingKey, msg: PcdMessage, _depth: int = 0) -> bool:
    """True iff ``msg`` and its whole history are compliant."""
    try:
        if _depth > MAX_CHAIN_DEPTH or msg.predicate not in vk.vks:
            return False
        local_payload, preds = _decode_pcd_payload(msg.proof.payload)
        expected_depth = 1 if not preds else preds[0].depth + 1
        if msg.depth != expected_depth:
            return False
        backend = get_backend(msg.proof.backend_id)
        local = Proof(msg.proof.backend_id, local_payload, msg.proof.public_inputs, msg.proof.elem_width)
        spec, aux, end = backend._open(vk.vks[msg.predicate], msg.z, local)
        if end != len(local_payload) or not backend._check(spec, msg.z, local, aux):
            return False
        if _compliance_error(vk, msg.predicate, msg.z, aux, preds):
            return False
        return all(pcd_verify(vk, p, _depth + 1) for p in preds)
    except (MalformedProof, DimensionError, struct.error, ValueError, IndexError) as e:
        log.debug("PCD message rejected: %s", e)
        return False


def chain_of(msg: PcdMessage) -> list[PcdMessage]:
    """Messages from ``msg`` back to its root (reference backend only)."""
    out = [msg]
    while True:
        _, preds = _decode_pcd_payload(out[-1].proof.payload)
        if not preds:
            return out
        out.append(preds[0])
