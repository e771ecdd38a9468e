"""Protocol circuits and their witness generators.

Every circuit is one synthesis function run against a :class:`Builder`: in
shape mode for key generation, in witness mode to produce an assignment. The
out-of-circuit digest evaluators at the top of this module are the same ones
agents use, so circuits and protocol code cannot drift apart.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Optional

from .field import from_radix, to_radix
from .gadgets import (
    alloc_limbs,
    canonical_pair_eval,
    concat_bits,
    gadget_bits,
    gadget_canonical_pair,
    gadget_leq,
    gadget_rsa3_verify,
    gadget_subset_sum_hash,
    gadget_unpack_canonical,
    pack,
    subset_sum_eval,
    to_bits,
)
from .params import ProtocolParams
from .r1cs import LC, Assignment, Builder, ConstraintSystem, GadgetHandle, deserialize_cs, serialize_cs

# ---------------------------------------------------------------------------
# Out-of-circuit digests (H, H1, H2 and the authority-key commitment)


def diagnosis_digest(params: ProtocolParams, secret: int, status: int | str, t_diag: int) -> int:
    """h_s = H(S, status, t')."""
    bits = concat_bits(
        (secret, params.secret_bits),
        (params.status_code(status), params.status_bits),
        (t_diag, params.epoch_bits),
    )
    return subset_sum_eval(params.hash_params("diagnosis"), bits)


def derive_token_value(params: ProtocolParams, secret: int, epoch: int) -> int:
    """T = H1(S, t), truncated to the token width."""
    bits = concat_bits((secret, params.secret_bits), (epoch, params.epoch_bits))
    raw = subset_sum_eval(params.hash_params("token"), bits)
    return raw & ((1 << params.token_bits) - 1)


def contact_digest(params: ProtocolParams, ta: int, tb: int, epoch: int) -> int:
    """h = H2(sorted(T_A, T_B), t); symmetric in the two tokens."""
    lo, hi = canonical_pair_eval(ta, tb)
    bits = concat_bits((lo, params.token_bits), (hi, params.token_bits), (epoch, params.epoch_bits))
    return subset_sum_eval(params.hash_params("contact"), bits)


def key_commitment(params: ProtocolParams, modulus: int) -> int:
    k, m = params.limb_bits, params.num_limbs
    bits = []
    for limb in to_radix(modulus, k, m):
        bits.extend(to_bits(limb, k))
    return subset_sum_eval(params.hash_params("authority_key"), bits)


# ---------------------------------------------------------------------------
# Types


class CircuitKind(str, enum.Enum):
    CONTACT = "Contact"
    TRANSITIVE_STRAWMAN = "TransitiveStrawman"
    PCD_M0 = "PcdM0"
    PCD_M1 = "PcdM1"
    HEALTH = "Health"
    DIGEST = "Digest"


PUBLIC_LAYOUTS = {
    CircuitKind.CONTACT: ("h", "h_s"),
    CircuitKind.TRANSITIVE_STRAWMAN: ("h_i", "h_j"),
    CircuitKind.PCD_M0: ("h_i", "h_s", "p_s_commitment"),
    CircuitKind.PCD_M1: ("h_j",),
    CircuitKind.HEALTH: ("h_s", "t"),
    CircuitKind.DIGEST: ("h_s", "status", "t_diag"),
}


@dataclass(frozen=True)
class CircuitSpec:
    kind: CircuitKind
    cs: ConstraintSystem
    public_layout: tuple[str, ...]
    params: Optional[ProtocolParams] = None
    # aux position of the private predecessor message (PcdM1 only)
    pcd_input_slot: Optional[int] = None
    # system indices of secret- and token-carrying variables
    private_roles: dict = dc_field(default_factory=dict, compare=False, hash=False)
    gadgets: tuple[GadgetHandle, ...] = dc_field(default=(), compare=False, hash=False)

    @property
    def num_constraints(self) -> int:
        return self.cs.num_constraints

    def gadget_counts(self) -> dict[str, int]:
        """Constraints per top-level gadget kind; the remainder is glue."""
        counts: dict[str, int] = {}
        for g in self.gadgets:
            if g.depth == 0:
                counts[g.name] = counts.get(g.name, 0) + g.num_constraints
        counts["glue"] = self.num_constraints - sum(counts.values())
        return counts


SPEC_MAGIC = b"CSPC"
SPEC_VERSION = 1


def _pack_str(s: str) -> bytes:
    raw = s.encode()
    return struct.pack(">H", len(raw)) + raw


def serialize_spec(spec: CircuitSpec) -> bytes:
    head = [SPEC_MAGIC, struct.pack(">H", SPEC_VERSION), _pack_str(spec.kind.value)]
    head.append(struct.pack(">H", len(spec.public_layout)))
    head.extend(_pack_str(n) for n in spec.public_layout)
    slot = -1 if spec.pcd_input_slot is None else spec.pcd_input_slot
    head.append(struct.pack(">i", slot))
    return b"".join(head) + serialize_cs(spec.cs)


def deserialize_spec(data: bytes) -> CircuitSpec:
    if data[:4] != SPEC_MAGIC:
        raise ValueError("bad circuit-spec magic")
    (version,) = struct.unpack_from(">H", data, 4)
    if version != SPEC_VERSION:
        raise ValueError(f"unsupported circuit-spec version {version}")
    pos = 6

    def read_str():
        nonlocal pos
        (n,) = struct.unpack_from(">H", data, pos)
        s = data[pos + 2 : pos + 2 + n].decode()
        pos += 2 + n
        return s

    kind = CircuitKind(read_str())
    (count,) = struct.unpack_from(">H", data, pos)
    pos += 2
    layout = tuple(read_str() for _ in range(count))
    (slot,) = struct.unpack_from(">i", data, pos)
    pos += 4
    cs = deserialize_cs(data[pos:])
    return CircuitSpec(kind, cs, layout, None, None if slot < 0 else slot)


@dataclass(frozen=True)
class ContactWitness:
    secret: int
    token_self: int
    token_other: int
    t: int
    t_diag: int
    status: int | str = "positive"


@dataclass(frozen=True)
class SignedContactWitness:
    """Contact witness plus the authority signature, for M0."""

    contact: ContactWitness
    signature: int
    modulus: int


@dataclass(frozen=True)
class TransitiveWitness:
    """B's view of an A->B contact at t1 and a B->C contact at t2."""

    secret: int
    token_a: int
    token_b1: int
    token_b2: int
    token_c: int
    t1: int
    t2: int


@dataclass(frozen=True)
class HealthWitness:
    secret: int
    t_test: int
    t_now: int
    status: int | str = "negative"


@dataclass(frozen=True)
class DigestWitness:
    secret: int
    status: int | str
    t_diag: int


# ---------------------------------------------------------------------------
# Synthesis helpers


class _Synth:
    """Shared circuit fragments over one builder."""

    def __init__(self, b: Builder, params: ProtocolParams):
        self.b = b
        self.params = params
        self.roles: dict[str, list[LC]] = {"secret": [], "token": []}

    def val(self, w, attr):
        return None if w is None else getattr(w, attr)

    def secret(self, value) -> list[LC]:
        s = self.b.alloc(value)
        bits = gadget_bits(self.b, s, self.params.secret_bits)
        self.roles["secret"].append(s)
        self.roles["secret"].extend(bits)
        return bits

    def epoch(self, value=None, lc: Optional[LC] = None) -> tuple[LC, list[LC]]:
        t = self.b.alloc(value) if lc is None else lc
        return t, gadget_bits(self.b, t, self.params.epoch_bits)

    def const_bits(self, value: int, width: int) -> list[LC]:
        return [self.b.const(bit) for bit in to_bits(value, width)]

    def token(self, value) -> LC:
        t = self.b.alloc(value)
        self.roles["token"].append(t)
        return t

    def derived_token(self, s_bits, t_bits) -> LC:
        raw = gadget_subset_sum_hash(self.b, self.params.hash_params("token"), s_bits + t_bits)
        bits = gadget_unpack_canonical(self.b, raw)
        tok = pack(bits[: self.params.token_bits], self.b.p)
        return tok

    def bind_token(self, value, s_bits, t_bits) -> LC:
        """Own token variable constrained to H1(S, t)."""
        tok = self.token(value)
        self.b.enforce_equal(tok, self.derived_token(s_bits, t_bits))
        return tok

    def contact_hash(self, ta: LC, tb: LC, t_bits) -> LC:
        width = self.params.token_bits
        lo, hi = gadget_canonical_pair(self.b, ta, tb, width)
        self.roles["token"].extend([lo, hi])
        lo_bits = gadget_bits(self.b, lo, width)
        hi_bits = gadget_bits(self.b, hi, width)
        return gadget_subset_sum_hash(
            self.b, self.params.hash_params("contact"), lo_bits + hi_bits + list(t_bits)
        )

    def diagnosis_hash(self, s_bits, status_bits, t_bits) -> LC:
        return gadget_subset_sum_hash(
            self.b, self.params.hash_params("diagnosis"), s_bits + status_bits + list(t_bits)
        )

    def window(self, early: LC, late: LC, span: int) -> None:
        """late - early <= span, on range-checked epochs."""
        gadget_leq(self.b, late, early + span, self.params.epoch_bits + 1)


# Each synth function takes (builder, params, witness or None, publics or None)
# and returns the _Synth used, so roles can be collected.


def _contact_core(sy: _Synth, w: Optional[ContactWitness], h: LC, h_s: LC) -> tuple[list[LC], LC]:
    p = sy.params
    s_bits = sy.secret(sy.val(w, "secret"))
    t, t_bits = sy.epoch(sy.val(w, "t"))
    td, td_bits = sy.epoch(sy.val(w, "t_diag"))
    pos = sy.const_bits(p.status_positive, p.status_bits)
    sy.b.enforce_equal(sy.diagnosis_hash(s_bits, pos, td_bits), h_s)
    ta = sy.bind_token(sy.val(w, "token_self"), s_bits, t_bits)
    tb = sy.token(sy.val(w, "token_other"))
    sy.b.enforce_equal(sy.contact_hash(ta, tb, t_bits), h)
    sy.window(t, td, p.contact_window_epochs)
    return s_bits, td


def _contact_publics(params, w: ContactWitness) -> tuple[int, int]:
    return (
        contact_digest(params, w.token_self, w.token_other, w.t),
        diagnosis_digest(params, w.secret, w.status, w.t_diag),
    )


def synth_contact(b, params, w: Optional[ContactWitness], publics):
    sy = _Synth(b, params)
    h = b.public("h", publics and publics[0])
    h_s = b.public("h_s", publics and publics[1])
    _contact_core(sy, w, h, h_s)
    return sy


def synth_pcd_m0(b, params, w: Optional[SignedContactWitness], publics):
    sy = _Synth(b, params)
    h = b.public("h_i", publics and publics[0])
    h_s = b.public("h_s", publics and publics[1])
    commit = b.public("p_s_commitment", publics and publics[2])
    _contact_core(sy, None if w is None else w.contact, h, h_s)
    k, m = params.limb_bits, params.num_limbs
    with b.gadget("authority_key"):
        n_limbs, n_bits = alloc_limbs(b, sy.val(w, "modulus"), k, m)
        digest = gadget_subset_sum_hash(b, params.hash_params("authority_key"), n_bits)
        b.enforce_equal(digest, commit)
    sig, _ = alloc_limbs(b, sy.val(w, "signature"), k, m)
    gadget_rsa3_verify(b, sig, h_s, n_limbs, k)
    return sy


def _m0_publics(params, w: SignedContactWitness):
    h, h_s = _contact_publics(params, w.contact)
    return h, h_s, key_commitment(params, w.modulus)


def _transitive_core(sy: _Synth, w: Optional[TransitiveWitness], h_i: LC, h_j: LC):
    s_bits = sy.secret(sy.val(w, "secret"))
    t1, t1_bits = sy.epoch(sy.val(w, "t1"))
    t2, t2_bits = sy.epoch(sy.val(w, "t2"))
    ta = sy.token(sy.val(w, "token_a"))
    tb1 = sy.bind_token(sy.val(w, "token_b1"), s_bits, t1_bits)
    tb2 = sy.bind_token(sy.val(w, "token_b2"), s_bits, t2_bits)
    tc = sy.token(sy.val(w, "token_c"))
    sy.b.enforce_equal(sy.contact_hash(ta, tb1, t1_bits), h_i)
    sy.b.enforce_equal(sy.contact_hash(tb2, tc, t2_bits), h_j)
    return t1, t2


def _transitive_publics(params, w: TransitiveWitness) -> tuple[int, int]:
    return (
        contact_digest(params, w.token_a, w.token_b1, w.t1),
        contact_digest(params, w.token_b2, w.token_c, w.t2),
    )


def synth_transitive(b, params, w: Optional[TransitiveWitness], publics):
    sy = _Synth(b, params)
    h_i = b.public("h_i", publics and publics[0])
    h_j = b.public("h_j", publics and publics[1])
    t1, t2 = _transitive_core(sy, w, h_i, h_j)
    sy.window(t1, t2, params.incubation_epochs)
    return sy


def synth_pcd_m1(b, params, w: Optional[TransitiveWitness], publics):
    sy = _Synth(b, params)
    h_j = b.public("h_j", publics and publics[0])
    h_i_val = None if w is None else contact_digest(params, w.token_a, w.token_b1, w.t1)
    h_i = b.alloc(h_i_val)
    b.labels["pcd_input"] = h_i
    t1, t2 = _transitive_core(sy, w, h_i, h_j)
    width = params.epoch_bits + 1
    # with the incubation bound off the hop must still not run backwards in time
    lower = params.incubation_epochs if params.transitive_lower_bound else 0
    gadget_leq(b, t1 + lower, t2, width)
    if params.transitive_upper_bound:
        gadget_leq(b, t2, t1 + params.contact_window_epochs, width)
    return sy


def synth_health(b, params, w: Optional[HealthWitness], publics):
    sy = _Synth(b, params)
    h_s = b.public("h_s", publics and publics[0])
    t = b.public("t", publics and publics[1])
    s_bits = sy.secret(sy.val(w, "secret"))
    _, now_bits = sy.epoch(lc=t)
    tt, tt_bits = sy.epoch(sy.val(w, "t_test"))
    neg = sy.const_bits(params.status_negative, params.status_bits)
    b.enforce_equal(sy.diagnosis_hash(s_bits, neg, tt_bits), h_s)
    sy.window(tt, t, params.health_window_epochs)
    return sy


def synth_digest(b, params, w: Optional[DigestWitness], publics):
    sy = _Synth(b, params)
    h_s = b.public("h_s", publics and publics[0])
    status = b.public("status", publics and publics[1])
    t_diag = b.public("t_diag", publics and publics[2])
    s_bits = sy.secret(sy.val(w, "secret"))
    status_bits = gadget_bits(b, status, params.status_bits)
    _, td_bits = sy.epoch(lc=t_diag)
    b.enforce_equal(sy.diagnosis_hash(s_bits, status_bits, td_bits), h_s)
    return sy


_SYNTH: dict[CircuitKind, tuple[Callable, Callable]] = {
    CircuitKind.CONTACT: (synth_contact, _contact_publics),
    CircuitKind.PCD_M0: (synth_pcd_m0, _m0_publics),
    CircuitKind.TRANSITIVE_STRAWMAN: (synth_transitive, _transitive_publics),
    CircuitKind.PCD_M1: (
        synth_pcd_m1,
        lambda params, w: (contact_digest(params, w.token_b2, w.token_c, w.t2),),
    ),
    CircuitKind.HEALTH: (
        synth_health,
        lambda params, w: (diagnosis_digest(params, w.secret, w.status, w.t_test), w.t_now),
    ),
    CircuitKind.DIGEST: (
        synth_digest,
        lambda params, w: (
            diagnosis_digest(params, w.secret, w.status, w.t_diag),
            params.status_code(w.status),
            w.t_diag,
        ),
    ),
}


# ---------------------------------------------------------------------------
# Public entry points


@lru_cache(maxsize=32)
def build_circuit(kind: CircuitKind, params: ProtocolParams) -> CircuitSpec:
    synth, _ = _SYNTH[kind]
    b = Builder(params.field, witness=False)
    sy = synth(b, params, None, None)
    cs, _ = b.build()
    slot = None
    if "pcd_input" in b.labels:
        slot = b.aux_index(b.labels["pcd_input"])
    roles = {name: sorted({b.var_index(lc) for lc in lcs}) for name, lcs in sy.roles.items()}
    layout = tuple(b.public_names)
    assert layout == PUBLIC_LAYOUTS[kind], layout
    return CircuitSpec(kind, cs, layout, params, slot, roles, tuple(b.gadgets))


def build_contact_circuit(params: ProtocolParams) -> CircuitSpec:
    return build_circuit(CircuitKind.CONTACT, params)


def build_transitive_circuit(params: ProtocolParams) -> CircuitSpec:
    return build_circuit(CircuitKind.TRANSITIVE_STRAWMAN, params)


def build_pcd_m0(params: ProtocolParams) -> CircuitSpec:
    return build_circuit(CircuitKind.PCD_M0, params)


def build_pcd_m1(params: ProtocolParams) -> CircuitSpec:
    return build_circuit(CircuitKind.PCD_M1, params)


def build_health_circuit(params: ProtocolParams) -> CircuitSpec:
    return build_circuit(CircuitKind.HEALTH, params)


def build_digest_circuit(params: ProtocolParams) -> CircuitSpec:
    return build_circuit(CircuitKind.DIGEST, params)


def honest_publics(kind: CircuitKind, params: ProtocolParams, witness) -> tuple[int, ...]:
    """Public inputs implied by a witness, via the out-of-circuit evaluators."""
    return tuple(_SYNTH[kind][1](params, witness))


def generate_assignment(
    kind: CircuitKind,
    params: ProtocolParams,
    witness,
    publics: Optional[tuple[int, ...]] = None,
    *,
    strict: bool = True,
) -> Assignment:
    """Run the witness generator for ``kind``.

    ``publics`` defaults to the values implied by the witness. With
    ``strict=False`` an impossible witness still yields an (unsatisfying)
    assignment instead of raising :class:`~zkcontact.r1cs.WitnessError`.
    """
    synth, derive = _SYNTH[kind]
    if publics is None:
        publics = tuple(derive(params, witness))
    b = Builder(params.field, witness=True, strict=strict)
    synth(b, params, witness, tuple(p % params.field_prime for p in publics))
    _, assignment = b.build()
    return assignment


def signature_limbs(params: ProtocolParams, value: int) -> list[int]:
    return to_radix(value, params.limb_bits, params.num_limbs)


def limbs_value(params: ProtocolParams, limbs) -> int:
    return from_radix(limbs, params.limb_bits)
