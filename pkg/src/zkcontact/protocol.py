"""Agent-side proof-of-contact protocol.

Health authorities sign diagnosis digests with textbook RSA, e = 3, over the
integer value of h_s with no padding. Unpadded e = 3 RSA is malleable and not
secure as a general signature scheme; it is used because it verifies cheaply
inside a circuit. Padding is the obvious extension point.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Union

import sympy

from .circuits import (
    CircuitKind,
    ContactWitness,
    DigestWitness,
    SignedContactWitness,
    TransitiveWitness,
    build_circuit,
    contact_digest,
    derive_token_value,
    diagnosis_digest,
    generate_assignment,
    key_commitment,
)
from .engine import (
    BackendConfig,
    KeyPair,
    MalformedProof,
    PcdMessage,
    PcdProvingKey,
    PcdVerifyingKey,
    Proof,
    ProveError,
    generate_keys,
    pcd_generate,
    pcd_prove,
    pcd_verify,
    prove,
    verify,
)
from .params import ProtocolParams

RSA_E = 3


# ---------------------------------------------------------------------------
# Health authorities


@dataclass(frozen=True)
class RsaKey:
    n: int
    d: int
    p: int
    q: int

    @property
    def bits(self) -> int:
        return self.n.bit_length()


@lru_cache(maxsize=32)
def generate_rsa3_key(bits: int, seed: int) -> RsaKey:
    """Deterministic e = 3 RSA key with an exactly ``bits``-bit modulus."""
    rng = random.Random(f"rsa3:{bits}:{seed}")
    half = bits // 2

    def prime() -> int:
        while True:
            c = rng.getrandbits(half) | (0b11 << (half - 2)) | 1
            q = sympy.nextprime(c)
            if q % 3 == 2 and q.bit_length() == half:
                return q

    while True:
        p, q = prime(), prime()
        if p != q and (p * q).bit_length() == bits:
            phi = (p - 1) * (q - 1)
            return RsaKey(p * q, pow(RSA_E, -1, phi), p, q)


def rsa3_verify(n: int, signature: int, message: int) -> bool:
    return 0 <= message < n and 0 <= signature < n and pow(signature, RSA_E, n) == message


class AuthorityRefusal(Exception):
    pass


@dataclass(frozen=True)
class CredentialRequest:
    """What an agent sends to its health authority. Never contains S."""

    h_s: int
    status: int
    t_diag: int
    proof: Optional[Proof] = None

    def to_bytes(self, redact_payload: bool = False) -> bytes:
        width = (self.h_s.bit_length() + 7) // 8 or 1
        head = b"CRQ1" + struct.pack(">H", width) + self.h_s.to_bytes(width, "big")
        head += struct.pack(">BI", self.status, self.t_diag)
        if self.proof is None:
            return head + b"\x00"
        return head + b"\x01" + self.proof.to_bytes(redact_payload)


@dataclass(frozen=True)
class DiagnosisCredential:
    h_s: int
    signature: int
    t_diag: int
    status: int
    authority_key_commitment: int


class Authority:
    """A health provider holding an RSA e = 3 signing key."""

    def __init__(self, authority_id: str, params: ProtocolParams, seed: int, keys: "ProtocolKeys | None" = None):
        self.id = authority_id
        self.params = params
        self.key = generate_rsa3_key(params.rsa_bits, seed)
        self.commitment = key_commitment(params, self.key.n)
        self.keys = keys

    @property
    def modulus(self) -> int:
        return self.key.n

    def sign(self, request: CredentialRequest) -> DiagnosisCredential:
        supported = (self.params.status_positive, self.params.status_negative)
        if request.status not in supported:
            raise AuthorityRefusal(f"unsupported status code {request.status}")
        if request.proof is not None:
            if self.keys is None:
                raise AuthorityRefusal("no digest verifying key configured")
            public = (request.h_s, request.status, request.t_diag)
            if not verify(self.keys.digest.verifying_key, public, request.proof):
                raise AuthorityRefusal("digest proof does not verify")
        sig = pow(request.h_s, self.key.d, self.key.n)
        return DiagnosisCredential(request.h_s, sig, request.t_diag, request.status, self.commitment)


class AuthorityRegistry:
    """Static list of registered authority verification keys."""

    def __init__(self, authorities: Iterable[Authority] = ()):
        self._by_commitment: dict[int, int] = {}
        for a in authorities:
            self.register(a.modulus, a.commitment)

    def register(self, modulus: int, commitment: int) -> None:
        self._by_commitment[commitment] = modulus

    @property
    def commitments(self) -> frozenset[int]:
        return frozenset(self._by_commitment)

    def moduli(self) -> list[int]:
        return list(self._by_commitment.values())

    def verify_signature(self, h_s: int, signature: int) -> bool:
        return any(rsa3_verify(n, signature, h_s) for n in self._by_commitment.values())


# ---------------------------------------------------------------------------
# Trusted setup


@dataclass(frozen=True)
class ProtocolKeys:
    params: ProtocolParams
    backend: BackendConfig
    contact: KeyPair
    digest: KeyPair
    health: KeyPair
    pcd_pk: PcdProvingKey
    pcd_vk: PcdVerifyingKey


@lru_cache(maxsize=16)
def _circuit_keys(params: ProtocolParams, backend: BackendConfig):
    return tuple(generate_keys(backend, build_circuit(k, params)) for k in (CircuitKind.CONTACT, CircuitKind.DIGEST, CircuitKind.HEALTH))


def setup(
    params: ProtocolParams, authority_commitments: Iterable[int], backend: BackendConfig = BackendConfig()
) -> ProtocolKeys:
    """Run the generator for every circuit; PCD keys accept only the given authorities."""
    contact, digest, health = _circuit_keys(params, backend)
    pcd_pk, pcd_vk = pcd_generate(
        backend,
        [build_circuit(CircuitKind.PCD_M0, params), build_circuit(CircuitKind.PCD_M1, params)],
        authority_commitments,
    )
    return ProtocolKeys(params, backend, contact, digest, health, pcd_pk, pcd_vk)


# ---------------------------------------------------------------------------
# Bundles and their wire format


def _fe(v: int, width: int) -> bytes:
    return v.to_bytes(width, "big")


@dataclass(frozen=True)
class ContactBundle:
    """Published tuple (pi, h, h_s, s), optionally with the first-hop PCD message for h."""

    proof: Proof
    h: int
    h_s: int
    signature: int
    first_hop: Optional[PcdMessage] = None

    @property
    def index_key(self) -> int:
        return self.h

    def to_bytes(self, redact_payload: bool = False) -> bytes:
        w = self.proof.elem_width
        sig = self.signature.to_bytes((self.signature.bit_length() + 7) // 8 or 1, "big")
        proof = self.proof.to_bytes(redact_payload)
        parts = [b"CB01", struct.pack(">H", w), _fe(self.h, w), _fe(self.h_s, w)]
        parts += [struct.pack(">H", len(sig)), sig, struct.pack(">I", len(proof)), proof]
        if self.first_hop is None:
            parts.append(b"\x00")
        else:
            raw = self.first_hop.to_bytes(redact_payload)
            parts += [b"\x01", struct.pack(">I", len(raw)), raw]
        return b"".join(parts)


@dataclass(frozen=True)
class TransitiveBundle:
    message: PcdMessage

    def __post_init__(self):
        if len(self.message.z) != 1:
            raise ValueError("transitive messages carry exactly one public value")

    @property
    def index_key(self) -> int:
        return self.message.z[0]

    def to_bytes(self, redact_payload: bool = False) -> bytes:
        raw = self.message.to_bytes(redact_payload)
        return b"TB01" + struct.pack(">I", len(raw)) + raw


Bundle = Union[ContactBundle, TransitiveBundle]


class InvalidBundle(ValueError):
    pass


def decode_bundle(data: bytes) -> Bundle:
    """Parse and structurally validate a bundle. Proofs are not checked."""
    try:
        tag = data[:4]
        if tag == b"CB01":
            (w,) = struct.unpack_from(">H", data, 4)
            pos = 6
            h = int.from_bytes(data[pos : pos + w], "big")
            h_s = int.from_bytes(data[pos + w : pos + 2 * w], "big")
            pos += 2 * w
            (slen,) = struct.unpack_from(">H", data, pos)
            sig = int.from_bytes(data[pos + 2 : pos + 2 + slen], "big")
            pos += 2 + slen
            (plen,) = struct.unpack_from(">I", data, pos)
            pos += 4
            if pos + plen >= len(data):
                raise InvalidBundle("truncated contact bundle")
            proof = Proof.from_bytes(data[pos : pos + plen])
            pos += plen
            flag = data[pos]
            pos += 1
            first_hop = None
            if flag == 1:
                (mlen,) = struct.unpack_from(">I", data, pos)
                pos += 4
                first_hop = PcdMessage.from_bytes(data[pos : pos + mlen])
                pos += mlen
            elif flag != 0:
                raise InvalidBundle("bad first-hop flag")
            if pos != len(data):
                raise InvalidBundle("trailing bytes after contact bundle")
            if proof.public_inputs != (h, h_s):
                raise InvalidBundle("proof public inputs disagree with (h, h_s)")
            if first_hop is not None and (first_hop.predicate is not CircuitKind.PCD_M0 or first_hop.z[:2] != (h, h_s)):
                raise InvalidBundle("first-hop message does not match the bundle")
            return ContactBundle(proof, h, h_s, sig, first_hop)
        if tag == b"TB01":
            (mlen,) = struct.unpack_from(">I", data, 4)
            if 8 + mlen != len(data):
                raise InvalidBundle("bad transitive bundle length")
            return TransitiveBundle(PcdMessage.from_bytes(data[8:]))
    except (struct.error, IndexError, MalformedProof, ValueError) as e:
        raise InvalidBundle(str(e)) from e
    raise InvalidBundle("unknown bundle tag")


# ---------------------------------------------------------------------------
# Agents


@dataclass(frozen=True)
class ContactRecord:
    h: int
    t: int
    token_self: int
    token_other: int


@dataclass(frozen=True)
class TokenBroadcast:
    token: int
    epoch: int

    def to_bytes(self, redact_payload: bool = False) -> bytes:
        return b"TOK1" + struct.pack(">I", self.epoch) + self.token.to_bytes(32, "big")


@dataclass(frozen=True)
class Match:
    h: int
    bundle: Bundle
    verified: bool
    order: int
    reason: str = ""


@dataclass(frozen=True)
class Notification:
    agent: str
    epoch: int
    order: int
    h: int


class AgentState:
    def __init__(self, params: ProtocolParams, secret: Optional[int] = None, *, rng=None, agent_id: str = ""):
        self.params = params
        self.id = agent_id
        if secret is None:
            rng = rng or random.SystemRandom()
            secret = rng.getrandbits(params.secret_bits)
        if not 0 <= secret < 1 << params.secret_bits:
            raise ValueError("secret out of range")
        self._secret = secret
        self.contact_log: dict[int, ContactRecord] = {}
        self.clock = 0
        self.emitted: list = []
        # digests this agent built bundles for itself; never matched against
        self.published: set[int] = set()

    @property
    def secret(self) -> int:
        return self._secret

    def __repr__(self):
        return f"AgentState({self.id!r}, contacts={len(self.contact_log)})"

    def advance(self, now: int) -> None:
        self.clock = max(self.clock, now)

    # tokens and contacts ---------------------------------------------------

    def derive_token(self, t: int) -> int:
        return derive_token_value(self.params, self._secret, t)

    def broadcast(self, t: int) -> int:
        tok = self.derive_token(t)
        self.emitted.append(TokenBroadcast(tok, t))
        return tok

    def record_contact(self, other: int, t: int) -> int:
        mine = self.derive_token(t)
        h = contact_digest(self.params, mine, other, t)
        self.contact_log.setdefault(h, ContactRecord(h, t, mine, other))
        return h

    def prune_contacts(self, now: int) -> int:
        window = self.params.contact_window_epochs
        stale = [h for h, c in self.contact_log.items() if now - c.t > window]
        for h in stale:
            del self.contact_log[h]
        return len(stale)

    # diagnosis -------------------------------------------------------------

    def credential_request(self, status, t_diag: int, keys: Optional[ProtocolKeys] = None) -> CredentialRequest:
        code = self.params.status_code(status)
        h_s = diagnosis_digest(self.params, self._secret, code, t_diag)
        proof = None
        if keys is not None:
            a = generate_assignment(CircuitKind.DIGEST, self.params, DigestWitness(self._secret, code, t_diag))
            proof = prove(keys.digest.proving_key, a.public, a.aux)
        return CredentialRequest(h_s, code, t_diag, proof)

    def request_credential(self, status, t_diag: int, authority: Authority, *, with_proof: bool = False) -> DiagnosisCredential:
        req = self.credential_request(status, t_diag, authority.keys if with_proof else None)
        self.emitted.append(req)
        return authority.sign(req)

    def _contact_witness(self, rec: ContactRecord, cred: DiagnosisCredential) -> ContactWitness:
        return ContactWitness(self._secret, rec.token_self, rec.token_other, rec.t, cred.t_diag, cred.status)

    def qualifying_contacts(self, t_diag: int) -> list[ContactRecord]:
        window = self.params.contact_window_epochs
        return sorted((c for c in self.contact_log.values() if t_diag - c.t <= window), key=lambda c: (c.t, c.h))

    def build_contact_bundles(
        self,
        cred: DiagnosisCredential,
        keys: ProtocolKeys,
        *,
        authority_modulus: Optional[int] = None,
        with_pcd: bool = False,
    ) -> list[ContactBundle]:
        """One bundle per logged contact within the window of the diagnosis.

        With ``with_pcd``, each bundle also carries the first-hop PCD message
        (signature checked in-circuit), which onward contacts chain from.
        """
        if cred.status != self.params.status_positive:
            raise ValueError("contact bundles need a positive diagnosis")
        bundles = []
        for rec in self.qualifying_contacts(cred.t_diag):
            w = self._contact_witness(rec, cred)
            a = generate_assignment(CircuitKind.CONTACT, self.params, w)
            proof = prove(keys.contact.proving_key, a.public, a.aux)
            first_hop = None
            if with_pcd:
                if authority_modulus is None:
                    raise ValueError("PCD bundles need the signing authority's modulus")
                sw = SignedContactWitness(w, cred.signature, authority_modulus)
                a0 = generate_assignment(CircuitKind.PCD_M0, self.params, sw)
                first_hop = pcd_prove(keys.pcd_pk, CircuitKind.PCD_M0, [], a0.aux, a0.public)
            bundles.append(ContactBundle(proof, rec.h, cred.h_s, cred.signature, first_hop))
            self.published.add(rec.h)
        return bundles

    def transitive_witness(self, matched: ContactRecord, onward: ContactRecord) -> TransitiveWitness:
        return TransitiveWitness(
            self._secret, matched.token_other, matched.token_self, onward.token_self, onward.token_other, matched.t, onward.t
        )

    def build_transitive_bundle(
        self, matched: tuple[int, PcdMessage], onward: ContactRecord, keys: ProtocolKeys
    ) -> TransitiveBundle:
        """Chain onto a verified message for one of our contacts (h_i) toward ``onward`` (h_j)."""
        h_i, msg = matched
        rec = self.contact_log.get(h_i)
        if rec is None:
            raise ProveError("matched digest is not in the contact log")
        if msg.z[0] != h_i:
            raise ProveError("message does not carry the matched digest")
        w = self.transitive_witness(rec, onward)
        a = generate_assignment(CircuitKind.PCD_M1, self.params, w, strict=False)
        out = pcd_prove(keys.pcd_pk, CircuitKind.PCD_M1, [msg], a.aux, a.public)
        self.published.add(onward.h)
        return TransitiveBundle(out)

    def onward_contacts(self, matched: ContactRecord) -> list[ContactRecord]:
        """Contacts a transitive proof from ``matched`` can be built for."""
        p = self.params
        lo = matched.t + (p.incubation_epochs if p.transitive_lower_bound else 0)
        hi = matched.t + p.contact_window_epochs if p.transitive_upper_bound else None
        out = []
        for c in self.contact_log.values():
            if c.h != matched.h and c.t >= lo and (hi is None or c.t <= hi):
                out.append(c)
        return sorted(out, key=lambda c: (c.t, c.h))

    # scanning --------------------------------------------------------------

    def scan_and_match(self, entries: Sequence, keys: ProtocolKeys, authorities: AuthorityRegistry) -> list[Match]:
        """Verify every registry entry whose digest is in our contact log."""
        matches = []
        for entry in entries:
            body = getattr(entry, "body", entry)
            try:
                bundle = body if isinstance(body, (ContactBundle, TransitiveBundle)) else decode_bundle(body)
            except InvalidBundle:
                continue
            h = bundle.index_key
            if h not in self.contact_log or h in self.published:
                continue
            matches.append(check_bundle(bundle, keys, authorities))
        return matches


def check_bundle(bundle: Bundle, keys: ProtocolKeys, authorities: AuthorityRegistry) -> Match:
    """Verify a bundle as a scanning client would."""
    if isinstance(bundle, ContactBundle):
        if not verify(keys.contact.verifying_key, (bundle.h, bundle.h_s), bundle.proof):
            return Match(bundle.h, bundle, False, 1, "proof rejected")
        if not authorities.verify_signature(bundle.h_s, bundle.signature):
            return Match(bundle.h, bundle, False, 1, "signature not from a registered authority")
        return Match(bundle.h, bundle, True, 1)
    msg = bundle.message
    if not pcd_verify(keys.pcd_vk, msg):
        return Match(bundle.index_key, bundle, False, msg.depth, "chain rejected")
    return Match(bundle.index_key, bundle, True, msg.depth)


def chain_source(bundle: Bundle) -> Optional[PcdMessage]:
    """The PCD message an onward transitive proof chains from, if any."""
    if isinstance(bundle, ContactBundle):
        return bundle.first_hop
    return bundle.message
