"""R1CS gadgets and their out-of-circuit evaluators.

Each ``gadget_*`` function emits constraints into a :class:`Builder` and, in
witness mode, fills the variables it allocates. Inputs and outputs are
:class:`LC` values so callers can pass linear expressions directly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

from .field import Field, from_radix, reduction_bounds, to_radix
from .r1cs import LC, Builder, var_ids

DOMAIN_PREFIX = b"zkcontact/v1/"


# ---------------------------------------------------------------------------
# Subset-sum hash parameters


@dataclass(frozen=True)
class SubsetSumParams:
    input_bits: int
    coefficients: tuple[int, ...]
    domain_tag: bytes
    p: int

    def __post_init__(self):
        if len(self.coefficients) != self.input_bits:
            raise ValueError("one coefficient per input bit is required")


def expand_coefficient(tag: bytes, index: int, field: Field) -> int:
    """SHAKE-256("zkcontact/v1/" || tag || u32be(index)), big-endian, mod p.

    Sixteen bytes beyond the field width keep the reduction bias negligible.
    """
    xof = hashlib.shake_256(DOMAIN_PREFIX + tag + index.to_bytes(4, "big"))
    return int.from_bytes(xof.digest(field.byte_len + 16), "big") % field.p


@lru_cache(maxsize=64)
def subset_sum_params(tag: bytes, p: int, input_bits: int) -> SubsetSumParams:
    field = Field(p)
    coeffs = tuple(expand_coefficient(tag, i, field) for i in range(input_bits))
    return SubsetSumParams(input_bits, coeffs, tag, p)


def subset_sum_eval(params: SubsetSumParams, bits: Sequence[int]) -> int:
    if len(bits) != params.input_bits:
        raise ValueError(f"expected {params.input_bits} input bits, got {len(bits)}")
    return sum(a for a, bit in zip(params.coefficients, bits) if bit) % params.p


def to_bits(value: int, width: int) -> list[int]:
    """Little-endian bits; raises if ``value`` does not fit."""
    if value < 0 or value >> width:
        raise ValueError(f"{value} does not fit in {width} bits")
    return [(value >> i) & 1 for i in range(width)]


def concat_bits(*parts: tuple[int, int]) -> list[int]:
    """Concatenate (value, width) pairs into one little-endian bit string per part."""
    out: list[int] = []
    for value, width in parts:
        out.extend(to_bits(value, width))
    return out


# ---------------------------------------------------------------------------
# Gadgets


def pack(bits: Sequence[LC], p: int) -> LC:
    return LC.combine(((1 << i, bit) for i, bit in enumerate(bits)), p)


def gadget_bits(b: Builder, x: LC, width: int) -> list[LC]:
    """Decompose ``x`` into ``width`` boolean variables.

    Emits ``width`` booleanity constraints and one packing constraint.
    """
    with b.gadget("bits") as h:
        v = b.value(x)
        if v is not None and v >> width:
            b.fail(f"value {v} does not fit in {width} bits")
            v &= (1 << width) - 1
        bits = [b.alloc(None if v is None else (v >> i) & 1) for i in range(width)]
        for bit in bits:
            b.enforce_boolean(bit)
        b.enforce_equal(pack(bits, b.p), x)
        h.input_vars = var_ids(x)
        h.output_vars = var_ids(*bits)
    return bits


def gadget_unpack_canonical(b: Builder, x: LC) -> list[LC]:
    """Bit-decompose a full field element, rejecting the non-canonical x + p encoding."""
    n = b.field.bits
    with b.gadget("unpack_canonical") as h:
        bits = gadget_bits(b, x, n)
        bound = b.p - 1
        eq = b.one
        for i in range(n - 1, -1, -1):
            if (bound >> i) & 1:
                if i == 0:
                    break
                eq = bits[i] if eq.is_constant() else b.mul(eq, bits[i])
            else:
                # while every higher bit matches p-1, this bit must be 0
                b.enforce(eq, bits[i], 0)
        h.input_vars = var_ids(x)
        h.output_vars = var_ids(*bits)
    return bits


def max_direct_leq_bits(field: Field) -> int:
    return field.bits - 2


def gadget_leq(b: Builder, lhs: LC, rhs: LC, width: int) -> None:
    """Constrain lhs <= rhs as integers, for values below 2^width.

    Widths up to bitlen(p) - 2 decompose (rhs - lhs) directly. Wider operands
    are range-checked and compared as (high, low) halves.
    """
    with b.gadget("leq") as h:
        if width <= max_direct_leq_bits(b.field):
            _leq_direct(b, lhs, rhs, width)
        else:
            _leq_split(b, lhs, rhs, width)
        h.input_vars = var_ids(lhs, rhs)


def _leq_direct(b: Builder, lhs: LC, rhs: LC, width: int) -> None:
    va, vb = b.value(lhs), b.value(rhs)
    if va is not None and va > vb:
        b.fail(f"{va} <= {vb} does not hold")
    gadget_bits(b, rhs - lhs, width)


def _leq_split(b: Builder, lhs: LC, rhs: LC, width: int) -> None:
    m = width // 2
    a_bits = gadget_bits(b, lhs, width)
    b_bits = gadget_bits(b, rhs, width)
    a_lo, a_hi = pack(a_bits[:m], b.p), pack(a_bits[m:], b.p)
    b_lo, b_hi = pack(b_bits[:m], b.p), pack(b_bits[m:], b.p)
    va, vb = b.value(lhs), b.value(rhs)
    s_val = None
    if va is not None:
        ah, bh = b.value(a_hi), b.value(b_hi)
        s_val = 1 if ah < bh else 0
        if va > vb:
            b.fail(f"{va} <= {vb} does not hold")
    # s = 1 selects "high halves strictly ordered"; s = 0 forces equal highs
    s = b.alloc(s_val)
    b.enforce_boolean(s)
    b.enforce(1 - s, b_hi - a_hi, 0)
    _leq_direct(b, a_hi + s, b_hi, width - m + 1)
    _leq_direct(b, a_lo, b_lo + s * (1 << m), m + 1)


def gadget_subset_sum_hash(b: Builder, params: SubsetSumParams, bits: Sequence[LC]) -> LC:
    """Digest variable constrained to sum_i a_i * bit_i."""
    if len(bits) != params.input_bits:
        raise ValueError(f"{params.domain_tag!r} hash takes {params.input_bits} bits, got {len(bits)}")
    with b.gadget("subset_sum") as h:
        acc = LC.combine(zip(params.coefficients, bits), b.p)
        out = b.alloc(b.value(acc))
        b.enforce_equal(acc, out)
        h.input_vars = var_ids(*bits)
        h.output_vars = var_ids(out)
    return out


def gadget_canonical_pair(b: Builder, ta: LC, tb: LC, width: int) -> tuple[LC, LC]:
    """(lo, hi) = sorted(ta, tb), selected by one swap bit."""
    with b.gadget("canonical_pair") as h:
        va, vb = b.value(ta), b.value(tb)
        swap = None if va is None else int(vb < va)
        s = b.alloc(swap)
        b.enforce_boolean(s)
        lo = b.alloc(None if va is None else min(va, vb))
        b.enforce(s, tb - ta, lo - ta)
        hi = b.alloc(None if va is None else max(va, vb))
        b.enforce_equal(ta + tb - lo, hi)
        gadget_leq(b, lo, hi, width)
        h.input_vars = var_ids(ta, tb)
        h.output_vars = var_ids(lo, hi)
    return lo, hi


def canonical_pair_eval(ta: int, tb: int) -> tuple[int, int]:
    return (ta, tb) if ta <= tb else (tb, ta)


# ---------------------------------------------------------------------------
# Multi-limb arithmetic and RSA (e = 3)


def alloc_limbs(b: Builder, value: Optional[int], k: int, m: int) -> tuple[list[LC], list[LC]]:
    """Allocate m range-checked k-bit limbs; returns (limbs, all bits low-first)."""
    digits: list[Optional[int]]
    if value is None:
        digits = [None] * m
    else:
        if value < 0 or value >> (k * m):
            b.fail(f"value does not fit in {m} limbs of {k} bits")
            value %= 1 << (k * m)
        digits = to_radix(value, k, m)
    limbs, bits = [], []
    for d in digits:
        limb = b.alloc(d)
        limbs.append(limb)
        bits.extend(gadget_bits(b, limb, k))
    return limbs, bits


def _horner(coeffs: Sequence[LC], x: int, p: int) -> LC:
    """Evaluate the polynomial with LC coefficients at the constant x."""
    return LC.combine(((pow(x, i, p), c) for i, c in enumerate(coeffs)), p)


def gadget_poly_mul(b: Builder, xs: Sequence[LC], ys: Sequence[LC]) -> list[LC]:
    """Product digits z_j = sum_i x_i y_{j-i}, checked by evaluating at 0..deg."""
    n = len(xs) + len(ys) - 1
    vx = [b.value(x) for x in xs]
    vy = [b.value(y) for y in ys]
    zvals: list[Optional[int]] = [None] * n
    if b.witness:
        zvals = [0] * n
        for i, a in enumerate(vx):
            for j, c in enumerate(vy):
                zvals[i + j] += a * c
    zs = [b.alloc(z) for z in zvals]
    for point in range(n):
        b.enforce(_horner(xs, point, b.p), _horner(ys, point, b.p), _horner(zs, point, b.p))
    return zs


def gadget_mulmod_check(
    b: Builder,
    xs: Sequence[LC],
    ys: Sequence[LC],
    ns: Sequence[LC],
    qs: Sequence[LC],
    rs: Sequence[LC],
    k: int,
) -> None:
    """Constrain X*Y = Q*N + R over the integers, for range-checked k-bit limbs.

    The digit-wise difference is driven to zero through a signed carry chain;
    every carry is offset and range-checked so no equation can wrap mod p.
    """
    m = len(xs)
    bounds = reduction_bounds(k, m)
    if bounds.max_residual >= b.p:
        raise ValueError("limb radix too large for this field")
    with b.gadget("mulmod") as h:
        zs = gadget_poly_mul(b, xs, ys)
        us = gadget_poly_mul(b, qs, ns)
        ndig = len(zs)
        zero = LC({}, b.p)
        diffs = [zs[j] - us[j] - (rs[j] if j < len(rs) else zero) for j in range(ndig)]
        base = 1 << k
        carry_prev = zero
        carry_val = 0
        for j in range(ndig):
            if j == ndig - 1:
                b.enforce_equal(diffs[j] + carry_prev, 0)
                break
            c_val = None
            if b.witness:
                d = _signed(b.value(zs[j]), b.p) - _signed(b.value(us[j]), b.p)
                if j < len(rs):
                    d -= b.value(rs[j])
                t = d + carry_val
                if t % base:
                    b.fail("product digits do not match quotient and remainder")
                carry_val = t // base
                c_val = carry_val
                if not -bounds.carry_offset <= c_val < bounds.carry_offset:
                    b.fail("carry out of range")
                    c_val = 0
            c = b.alloc(c_val)
            gadget_bits(b, c + bounds.carry_offset, bounds.carry_bits)
            b.enforce_equal(diffs[j] + carry_prev, c * base)
            carry_prev = c
        h.input_vars = var_ids(*xs, *ys, *ns, *qs, *rs)


def _signed(v: int, p: int) -> int:
    return v if v <= p // 2 else v - p


def gadget_rsa3_verify(
    b: Builder,
    sig_limbs: Sequence[LC],
    msg: LC,
    n_limbs: Sequence[LC],
    k: int,
) -> None:
    """Constrain sig^3 == msg (mod N) for textbook RSA with e = 3.

    ``sig_limbs`` and ``n_limbs`` must already be range-checked k-bit limbs
    (``n_limbs`` may be constants). ``msg`` is canonically unpacked and its
    integer value is the message representative.
    """
    m = len(sig_limbs)
    if len(n_limbs) != m:
        raise ValueError("signature and modulus limb counts differ")
    with b.gadget("rsa3_verify") as h:
        msg_bits = gadget_unpack_canonical(b, msg)
        rep = [pack(msg_bits[i : i + k], b.p) for i in range(0, len(msg_bits), k)]
        if len(rep) > m:
            raise ValueError("message representative wider than the modulus")

        s_val = n_val = None
        if b.witness:
            s_val = from_radix([b.value(x) for x in sig_limbs], k)
            n_val = from_radix([b.value(x) for x in n_limbs], k)
        q1v = r1v = q2v = None
        if s_val is not None:
            if n_val == 0:
                b.fail("zero modulus")
                n_val = 1
            q1v, r1v = divmod(s_val * s_val, n_val)
            rep_val = b.value(msg)
            q2v = (r1v * s_val - rep_val) // n_val
            if (r1v * s_val - rep_val) % n_val:
                b.fail("signature does not verify")
            if q2v < 0:
                b.fail("signature does not verify")
                q2v = 0
        q1, _ = alloc_limbs(b, q1v, k, m)
        r1, _ = alloc_limbs(b, r1v, k, m)
        q2, _ = alloc_limbs(b, q2v, k, m)
        gadget_mulmod_check(b, sig_limbs, sig_limbs, n_limbs, q1, r1, k)
        gadget_mulmod_check(b, r1, sig_limbs, n_limbs, q2, rep, k)
        h.input_vars = var_ids(*sig_limbs, msg, *n_limbs)


def rsa3_verify_eval(sig: int, msg: int, n: int) -> bool:
    return 0 < n and pow(sig, 3, n) == msg % n and msg < n
