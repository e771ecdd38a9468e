import random
from pathlib import Path

import pytest

from zkcontact.circuits import (
    PUBLIC_LAYOUTS,
    CircuitKind,
    ContactWitness,
    HealthWitness,
    SignedContactWitness,
    TransitiveWitness,
    build_circuit,
    contact_digest,
    derive_token_value,
    deserialize_spec,
    diagnosis_digest,
    generate_assignment,
    honest_publics,
    key_commitment,
    serialize_spec,
)
from zkcontact.gadgets import concat_bits, subset_sum_eval
from zkcontact.params import DEFAULT_PARAMS, ProtocolParams
from zkcontact.protocol import generate_rsa3_key
from zkcontact.r1cs import Assignment, WitnessError, circuit_digest, cs_check

from witnesses import Witnesses

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def W(toy):
    return Witnesses(toy)


def satisfied(kind, params, witness, publics=None):
    spec = build_circuit(kind, params)
    a = generate_assignment(kind, params, witness, publics, strict=False)
    return cs_check(spec.cs, a)


# --- evaluators --------------------------------------------------------------


def test_digest_evaluators_follow_bit_layouts(toy):
    p = toy
    s, t = 12345, 77
    tok_raw = subset_sum_eval(p.hash_params("token"), concat_bits((s, p.secret_bits), (t, p.epoch_bits)))
    assert derive_token_value(p, s, t) == tok_raw & ((1 << p.token_bits) - 1)
    a, b = 5, 3
    h = subset_sum_eval(p.hash_params("contact"), concat_bits((3, p.token_bits), (5, p.token_bits), (t, p.epoch_bits)))
    assert contact_digest(p, a, b, t) == contact_digest(p, b, a, t) == h
    hs = subset_sum_eval(
        p.hash_params("diagnosis"), concat_bits((s, p.secret_bits), (p.status_positive, p.status_bits), (t, p.epoch_bits))
    )
    assert diagnosis_digest(p, s, "positive", t) == hs


def test_contact_digest_depends_on_epoch(toy):
    assert contact_digest(toy, 1, 2, 10) != contact_digest(toy, 1, 2, 11)


# --- completeness and structure ----------------------------------------------


@pytest.mark.parametrize("kind", list(CircuitKind), ids=lambda k: k.value)
def test_honest_witness_satisfies(kind, toy, W):
    assert satisfied(kind, toy, W.honest(kind))


@pytest.mark.parametrize("kind", list(CircuitKind), ids=lambda k: k.value)
def test_public_layout_is_minimal(kind, toy):
    spec = build_circuit(kind, toy)
    assert spec.public_layout == PUBLIC_LAYOUTS[kind]
    assert spec.cs.num_public == len(PUBLIC_LAYOUTS[kind])
    public_idx = set(range(1, 1 + spec.cs.num_public))
    for role in ("secret", "token"):
        assert not public_idx & set(spec.private_roles.get(role, ()))
    assert spec.private_roles["secret"]


def test_transitive_message_has_one_public_value(toy):
    assert build_circuit(CircuitKind.PCD_M1, toy).cs.num_public == 1


@pytest.mark.parametrize("kind", list(CircuitKind), ids=lambda k: k.value)
def test_every_public_input_is_bound(kind, toy, W):
    w = W.honest(kind)
    pub = list(honest_publics(kind, toy, w))
    for i in range(len(pub)):
        bad = list(pub)
        # the health circuit's current time may move freely inside the window
        step = toy.health_window_epochs + 1 if (kind, i) == (CircuitKind.HEALTH, 1) else 1
        bad[i] = (bad[i] + step) % toy.field_prime
        assert not satisfied(kind, toy, w, tuple(bad)), (kind, i)


@pytest.mark.parametrize("kind", [CircuitKind.CONTACT, CircuitKind.PCD_M1, CircuitKind.HEALTH, CircuitKind.DIGEST], ids=lambda k: k.value)
def test_no_free_aux_variables(kind, toy, W):
    spec = build_circuit(kind, toy)
    a = generate_assignment(kind, toy, W.honest(kind))
    r = random.Random(kind.value)
    for j in r.sample(range(len(a.aux)), min(120, len(a.aux))):
        aux = list(a.aux)
        aux[j] = (aux[j] + 1) % toy.field_prime
        assert not cs_check(spec.cs, Assignment(a.public, tuple(aux))), j


def test_spec_serialization_roundtrip(toy):
    spec = build_circuit(CircuitKind.PCD_M1, toy)
    back = deserialize_spec(serialize_spec(spec))
    assert back.cs == spec.cs and back.kind == spec.kind
    assert back.public_layout == spec.public_layout and back.pcd_input_slot == spec.pcd_input_slot


def test_gadget_accounting(toy):
    spec = build_circuit(CircuitKind.CONTACT, toy)
    counts = spec.gadget_counts()
    assert sum(counts.values()) <= spec.cs.num_constraints
    assert {"subset_sum", "canonical_pair", "leq"} <= set(counts)


def test_golden_circuit_digests():
    expected = dict(line.split() for line in (GOLDEN / "circuit_digests.txt").read_text().splitlines() if line.strip())
    got = {k.value: circuit_digest(build_circuit(k, DEFAULT_PARAMS).cs).hex() for k in CircuitKind}
    assert got == expected


# --- binding -----------------------------------------------------------------


def test_contact_status_binding(toy, W):
    w = W.contact(status="negative")
    assert not satisfied(CircuitKind.CONTACT, toy, w)
    neg = diagnosis_digest(toy, w.secret, "negative", w.t_diag)
    assert not satisfied(CircuitKind.CONTACT, toy, w, (honest_publics(CircuitKind.CONTACT, toy, w)[0], neg))


def test_contact_needs_own_token(toy, W):
    c = W.contact()
    forged = ContactWitness(c.secret, W.tok(c.secret, c.t + 1), c.token_other, c.t, c.t_diag)
    publics = (contact_digest(toy, forged.token_self, forged.token_other, c.t), diagnosis_digest(toy, c.secret, "positive", c.t_diag))
    assert not satisfied(CircuitKind.CONTACT, toy, forged, publics)
    # someone else's secret cannot vouch for Alice's token
    thief = ContactWitness(W.s_c, c.token_self, c.token_other, c.t, c.t_diag)
    assert not satisfied(CircuitKind.CONTACT, toy, thief, honest_publics(CircuitKind.CONTACT, toy, c))


def test_m0_rejects_bad_signature(toy, W):
    w = W.signed()
    bad = SignedContactWitness(w.contact, (w.signature + 1) % w.modulus, w.modulus)
    assert not satisfied(CircuitKind.PCD_M0, toy, bad, honest_publics(CircuitKind.PCD_M0, toy, w))
    other = generate_rsa3_key(toy.rsa_bits, 6)
    forged = SignedContactWitness(w.contact, w.signature, other.n)
    assert not satisfied(CircuitKind.PCD_M0, toy, forged, honest_publics(CircuitKind.PCD_M0, toy, w))


def test_key_commitment_distinguishes_keys(toy):
    a, b = generate_rsa3_key(toy.rsa_bits, 1), generate_rsa3_key(toy.rsa_bits, 2)
    assert key_commitment(toy, a.n) != key_commitment(toy, b.n)


# --- time bounds -------------------------------------------------------------


@pytest.mark.parametrize("params", [ProtocolParams.toy(), DEFAULT_PARAMS], ids=["toy", "default"])
def test_contact_window_boundary(params):
    W_ = Witnesses(params, seed=3)
    w = params.contact_window_epochs
    assert w == 4032
    assert satisfied(CircuitKind.CONTACT, params, W_.contact(t=5000, t_diag=5000 + w))
    assert not satisfied(CircuitKind.CONTACT, params, W_.contact(t=5000, t_diag=5000 + w + 1))


@pytest.mark.parametrize("params", [ProtocolParams.toy(), DEFAULT_PARAMS], ids=["toy", "default"])
def test_health_window_boundary(params):
    W_ = Witnesses(params, seed=4)
    assert params.health_window_epochs == 288
    assert satisfied(CircuitKind.HEALTH, params, W_.health(t_test=9000, t_now=9288))
    assert not satisfied(CircuitKind.HEALTH, params, W_.health(t_test=9000, t_now=9289))


def test_health_needs_negative_result(toy, W):
    w = HealthWitness(W.s_a, 1000, 1100, status="positive")
    assert not satisfied(CircuitKind.HEALTH, toy, w)


def test_m1_bounds(toy, W):
    pi, win = toy.incubation_epochs, toy.contact_window_epochs
    t1 = W.t1
    assert satisfied(CircuitKind.PCD_M1, toy, W.transitive(t1, t1 + pi))
    assert not satisfied(CircuitKind.PCD_M1, toy, W.transitive(t1, t1 + pi - 1))
    assert satisfied(CircuitKind.PCD_M1, toy, W.transitive(t1, t1 + win))
    assert not satisfied(CircuitKind.PCD_M1, toy, W.transitive(t1, t1 + win + 1))


def test_m1_bound_toggles():
    no_lower = ProtocolParams.toy(transitive_lower_bound=False)
    W_ = Witnesses(no_lower)
    t1 = W_.t1
    assert satisfied(CircuitKind.PCD_M1, no_lower, W_.transitive(t1, t1))
    assert satisfied(CircuitKind.PCD_M1, no_lower, W_.transitive(t1, t1 + 12))
    # the hop still cannot go backwards in time
    assert not satisfied(CircuitKind.PCD_M1, no_lower, W_.transitive(t1, t1 - 1))
    no_upper = ProtocolParams.toy(transitive_upper_bound=False)
    W_ = Witnesses(no_upper)
    assert satisfied(CircuitKind.PCD_M1, no_upper, W_.transitive(t1, t1 + 10 * no_upper.contact_window_epochs))


def test_strawman_uses_plain_difference(toy, W):
    pi = toy.incubation_epochs
    assert satisfied(CircuitKind.TRANSITIVE_STRAWMAN, toy, W.transitive(W.t1, W.t1 + pi))
    assert not satisfied(CircuitKind.TRANSITIVE_STRAWMAN, toy, W.transitive(W.t1, W.t1 + pi + 1))


def test_m1_requires_same_middle_agent(toy, W):
    w = W.transitive()
    forged = TransitiveWitness(W.s_c, w.token_a, w.token_b1, w.token_b2, w.token_c, w.t1, w.t2)
    assert not satisfied(CircuitKind.PCD_M1, toy, forged, honest_publics(CircuitKind.PCD_M1, toy, w))


def test_epoch_range_checked(toy, W):
    big = 1 << toy.epoch_bits
    with pytest.raises((WitnessError, ValueError)):
        generate_assignment(CircuitKind.HEALTH, toy, W.health(t_test=big, t_now=big + 1))


def test_default_contact_size():
    n = build_circuit(CircuitKind.CONTACT, DEFAULT_PARAMS).cs.num_constraints
    assert 500 <= n <= 50_000
