"""Gadgets against independent out-of-circuit oracles."""

import random

import numpy as np
import pytest

from zkcontact.field import BN254_R, MERSENNE_61, Field, radix_bits, to_radix
from zkcontact.gadgets import (
    alloc_limbs,
    canonical_pair_eval,
    expand_coefficient,
    gadget_bits,
    gadget_canonical_pair,
    gadget_leq,
    gadget_mulmod_check,
    gadget_rsa3_verify,
    gadget_subset_sum_hash,
    gadget_unpack_canonical,
    rsa3_verify_eval,
    subset_sum_eval,
    subset_sum_params,
    to_bits,
)
from zkcontact.r1cs import Assignment, Builder, WitnessError, cs_check, cs_check_batch
from zkcontact.protocol import generate_rsa3_key

BN = Field(BN254_R)
M61 = Field(MERSENNE_61)
M31 = Field(2**31 - 1)
P2039 = Field(2039)
CASES = 500


def leq_system(field, a, b, width, strict=False):
    bl = Builder(field, strict=strict)
    x = bl.public("a", a)
    y = bl.public("b", b)
    gadget_leq(bl, x, y, width)
    return bl.build()


# --- subset-sum hash ---------------------------------------------------------


def test_coefficients_follow_the_xof_derivation():
    import hashlib

    raw = hashlib.shake_256(b"zkcontact/v1/H1" + (7).to_bytes(4, "big")).digest(BN.byte_len + 16)
    assert expand_coefficient(b"H1", 7, BN) == int.from_bytes(raw, "big") % BN.p
    params = subset_sum_params(b"H2", BN.p, 16)
    assert params.coefficients[3] == expand_coefficient(b"H2", 3, BN)


def test_subset_sum_hash_matches_oracle():
    r = random.Random(1)
    n = 96
    params = subset_sum_params(b"H", BN.p, n)
    for _ in range(CASES):
        bits = [r.getrandbits(1) for _ in range(n)]
        expect = sum(a for a, bit in zip(params.coefficients, bits) if bit) % BN.p
        assert subset_sum_eval(params, bits) == expect
        b = Builder(BN)
        out = b.public("digest", expect)
        bv = [b.alloc(x) for x in bits]
        for x in bv:
            b.enforce_boolean(x)
        b.enforce_equal(gadget_subset_sum_hash(b, params, bv), out)
        cs, a = b.build()
        assert cs_check(cs, a)
        assert not cs_check(cs, Assignment(((expect + 1) % BN.p,), a.aux))


def test_subset_sum_rejects_wrong_arity():
    params = subset_sum_params(b"H", BN.p, 8)
    with pytest.raises(ValueError):
        subset_sum_eval(params, [0] * 7)


# --- comparison --------------------------------------------------------------


def _forced_direct_aux(a, b, p, width):
    d = (b - a) % p
    return np.stack([(d >> i) & 1 for i in range(width)], axis=1)


def test_leq_direct_exhaustive_10_bit():
    """Every (a, b) in [0, 1024)^2, direct decomposition path.

    In the direct path all aux variables are bits of b - a, and since
    2^10 < p the packing equality leaves no freedom: the forced witness
    below is the only candidate, so rejecting it means no witness exists.
    """
    width = 10
    assert width <= M31.bits - 2
    cs, _ = leq_system(M31, 0, 0, width)
    r = random.Random(2)
    for _ in range(20):
        a, b = r.randrange(1024), r.randrange(1024)
        _, asg = leq_system(M31, a, b, width)
        assert list(asg.aux) == list(_forced_direct_aux(np.array([a]), np.array([b]), M31.p, width)[0])
    grid = np.arange(1 << width, dtype=np.int64)
    a, b = (x.ravel() for x in np.meshgrid(grid, grid, indexing="ij"))
    ok = cs_check_batch(cs, np.stack([a, b], axis=1), _forced_direct_aux(a, b, M31.p, width))
    assert np.array_equal(ok, a <= b)


def _forced_split_aux(a, b, s, p, width):
    m = width // 2
    bits = lambda v, w: [(v >> i) & 1 for i in range(w)]
    a_hi, a_lo, b_hi, b_lo = a >> m, a & ((1 << m) - 1), b >> m, b & ((1 << m) - 1)
    hi = (b_hi - a_hi - s) % p
    lo = (b_lo + s * (1 << m) - a_lo) % p
    cols = bits(a, width) + bits(b, width) + [s * np.ones_like(a)] + bits(hi, width - m + 1) + bits(lo, m + 1)
    return np.stack(cols, axis=1)


def test_leq_split_exhaustive_10_bit():
    """Every (a, b) in [0, 1024)^2 and both selector values, split path.

    Over p = 2039 a 10-bit comparison takes the (high, low) route. Given the
    selector bit every other aux value is forced by a packing equality, so
    trying s = 0 and s = 1 covers every possible witness.
    """
    width = 10
    assert width > P2039.bits - 2
    cs, _ = leq_system(P2039, 0, 0, width)
    r = random.Random(3)
    for _ in range(20):
        a, b = r.randrange(1024), r.randrange(1024)
        _, asg = leq_system(P2039, a, b, width)
        s = asg.aux[2 * width]
        assert list(asg.aux) == list(_forced_split_aux(np.array([a]), np.array([b]), s, P2039.p, width)[0])
    grid = np.arange(1 << width, dtype=np.int64)
    a, b = (x.ravel() for x in np.meshgrid(grid, grid, indexing="ij"))
    pub = np.stack([a, b], axis=1)
    accepted = np.zeros(a.shape, dtype=bool)
    for s in (0, 1):
        accepted |= cs_check_batch(cs, pub, _forced_split_aux(a, b, np.full_like(a, s), P2039.p, width))
    assert np.array_equal(accepted, a <= b)


@pytest.mark.parametrize("width", [32, 33, BN.bits - 1])
def test_leq_matches_integer_comparison(width):
    r = random.Random(width)
    for i in range(CASES):
        a, b = r.getrandbits(width), r.getrandbits(width)
        if i % 5 == 0:
            b = a + r.randrange(-2, 3)
            b = min(max(b, 0), (1 << width) - 1)
        cs, asg = leq_system(BN, a, b, width)
        assert cs_check(cs, asg) == (a <= b), (a, b)


def test_leq_strict_mode_refuses():
    with pytest.raises(WitnessError):
        leq_system(BN, 5, 4, 32, strict=True)


def test_wide_leq_not_fooled_by_wraparound():
    # a > b by one; a plain decomposition of (b - a) would need p - 1 to fit
    width = BN.bits - 1
    b = (1 << width) - 2
    cs, asg = leq_system(BN, b + 1, b, width)
    assert not cs_check(cs, asg)


# --- bits and canonical unpacking -------------------------------------------


def test_bits_gadget_roundtrip():
    r = random.Random(4)
    for _ in range(100):
        v = r.getrandbits(40)
        b = Builder(BN)
        x = b.alloc(v)
        bits = gadget_bits(b, x, 40)
        cs, asg = b.build()
        assert cs_check(cs, asg)
        assert [b.value(bit) for bit in bits] == to_bits(v, 40)
        assert len(cs.constraints) == 41


def test_unpack_canonical_rejects_x_plus_p():
    f = Field(2039)
    for x in range(0, (1 << f.bits) - f.p):
        assert _canonical_checker(f, x, to_bits(x, f.bits))
        # the alternative encoding x + p also fits in bitlen bits
        assert not _canonical_checker(f, x, to_bits(x + f.p, f.bits))


def _canonical_checker(f, x, bits):
    """Does unpack(x) accept these bits? The remaining aux are forced products of bits."""
    b = Builder(f, strict=False)
    xv = b.public("x", x)
    gadget_unpack_canonical(b, xv)
    cs, asg = b.build()
    n = f.bits
    aux = list(asg.aux)
    aux[:n] = bits
    bound = f.p - 1
    eq, pos = 1, n
    for i in range(n - 1, -1, -1):
        if (bound >> i) & 1:
            if i == 0:
                break
            if i == n - 1:
                eq = bits[i]
            else:
                eq = eq * bits[i]
                aux[pos] = eq
                pos += 1
    return cs_check(cs, Assignment(asg.public, tuple(aux)))


# --- canonical pair ----------------------------------------------------------


def test_canonical_pair_matches_oracle():
    r = random.Random(5)
    width = BN.bits - 1
    for i in range(CASES):
        ta = r.getrandbits(width)
        tb = ta if i % 50 == 0 else r.getrandbits(width)
        b = Builder(BN)
        x, y = b.alloc(ta), b.alloc(tb)
        lo, hi = gadget_canonical_pair(b, x, y, width)
        cs, asg = b.build()
        assert cs_check(cs, asg)
        assert (b.value(lo), b.value(hi)) == canonical_pair_eval(ta, tb) == tuple(sorted((ta, tb)))


def test_canonical_pair_cannot_output_unsorted():
    width = 60
    b = Builder(M61, strict=False)
    x, y = b.alloc(10), b.alloc(3)
    lo, hi = gadget_canonical_pair(b, x, y, width)
    cs, asg = b.build()
    aux = list(asg.aux)
    # flip the swap bit and the outputs to claim (lo, hi) = (10, 3)
    i_s, i_lo, i_hi = b.aux_index(lo) - 1, b.aux_index(lo), b.aux_index(hi)
    aux[i_s], aux[i_lo], aux[i_hi] = 0, 10, 3
    assert not cs_check(cs, Assignment(asg.public, tuple(aux)))


# --- radix multiplication and RSA -------------------------------------------


def mulmod_system(field, x, y, n, q, r, bits):
    k = radix_bits(field, bits)
    m = -(-bits // k)
    b = Builder(field, strict=False)
    xs, _ = alloc_limbs(b, x, k, m)
    ys, _ = alloc_limbs(b, y, k, m)
    ns = [b.const(d) for d in to_radix(n, k, m)]
    qs, _ = alloc_limbs(b, q, k, m)
    rs, _ = alloc_limbs(b, r, k, m)
    gadget_mulmod_check(b, xs, ys, ns, qs, rs, k)
    return b.build()


@pytest.mark.parametrize("field,bits,cases", [(M61, 128, CASES), (BN, 256, 200)], ids=["m61", "bn254"])
def test_mulmod_matches_divmod(field, bits, cases):
    rnd = random.Random(6)
    for i in range(cases):
        n = rnd.getrandbits(bits) | 1 << (bits - 1)
        x, y = rnd.randrange(n), rnd.randrange(n)
        q, r = divmod(x * y, n)
        cs, asg = mulmod_system(field, x, y, n, q, r, bits)
        assert cs_check(cs, asg)
        if i % 25 == 0:
            cs2, asg2 = mulmod_system(field, x, y, n, q, (r + 1) % n, bits)
            assert not cs_check(cs2, asg2)
            cs3, asg3 = mulmod_system(field, x, y, n, q + 1, r, bits)
            assert not cs_check(cs3, asg3)


def test_mulmod_is_an_integer_identity():
    """R is not required to be reduced: any exact split X*Y = Q*N + R is accepted."""
    rnd = random.Random(8)
    n = rnd.getrandbits(128) | 1 << 127
    x, y = n - 1, n - 2
    q, r = divmod(x * y, n)
    cs, asg = mulmod_system(M61, x, y, n, q - 1, r + n, 128)
    assert cs_check(cs, asg)


def rsa_system(field, sig, msg, n, bits):
    k = radix_bits(field, bits)
    m = -(-bits // k)
    b = Builder(field, strict=False)
    sl, _ = alloc_limbs(b, sig, k, m)
    nl = [b.const(d) for d in to_radix(n, k, m)]
    mv = b.public("msg", msg)
    gadget_rsa3_verify(b, sl, mv, nl, k)
    return b.build()


def test_rsa3_gadget_matches_pow():
    key = generate_rsa3_key(256, 42)
    rnd = random.Random(7)
    for i in range(100):
        msg = rnd.randrange(M61.p)
        sig = pow(msg, key.d, key.n)
        if i % 2:
            sig = (sig + rnd.randrange(1, 1000)) % key.n
        cs, asg = rsa_system(M61, sig, msg, key.n, 256)
        assert cs_check(cs, asg) == rsa3_verify_eval(sig, msg, key.n) == (i % 2 == 0)
