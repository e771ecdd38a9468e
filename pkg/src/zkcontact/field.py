"""Prime-field arithmetic and radix-limb big-integer arithmetic.

Field values are handled as canonical Python ints in ``[0, p)`` on the hot
paths (constraint building, satisfaction checks); :class:`FieldElement` is the
boxed form used at API boundaries.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass
from typing import Iterable, Sequence

# Scalar field of the BN254 curve.
BN254_R = 21888242871839275222246405745257275088548364400416034343698204186575808495617
MERSENNE_61 = (1 << 61) - 1
P251 = 251

WORD_BITS = 64
_WORD_MASK = (1 << WORD_BITS) - 1


class FieldError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Field:
    """The prime field F_p."""

    p: int

    def __post_init__(self):
        if self.p < 3:
            raise ValueError("field prime must be an odd prime")

    @property
    def bits(self) -> int:
        return self.p.bit_length()

    @property
    def byte_len(self) -> int:
        return (self.bits + 7) // 8

    def __call__(self, value: int) -> "FieldElement":
        return FieldElement(value, self)

    def reduce(self, a: int) -> int:
        return a % self.p

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.p

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.p

    def neg(self, a: int) -> int:
        return (-a) % self.p

    def inv(self, a: int) -> int:
        a %= self.p
        if a == 0:
            raise FieldError("inverse of zero")
        return pow(a, -1, self.p)

    def random(self, rng=None) -> int:
        if rng is None:
            return secrets.randbelow(self.p)
        return rng.randrange(self.p)

    def encode(self, a: int) -> bytes:
        """Fixed-width big-endian encoding of a canonical value."""
        if not 0 <= a < self.p:
            raise FieldError(f"value {a} is not a canonical element of F_{self.p}")
        return a.to_bytes(self.byte_len, "big")

    def decode(self, data: bytes) -> int:
        if len(data) != self.byte_len:
            raise FieldError(f"expected {self.byte_len} bytes, got {len(data)}")
        a = int.from_bytes(data, "big")
        if a >= self.p:
            raise FieldError("non-canonical field encoding")
        return a


class FieldElement:
    __slots__ = ("value", "field")

    def __init__(self, value: int, field: Field):
        self.value = value % field.p
        self.field = field

    def _coerce(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise FieldError("operands belong to different fields")
            return other.value
        if isinstance(other, int):
            return other % self.field.p
        return NotImplemented

    def _wrap(self, v: int) -> "FieldElement":
        return FieldElement(v, self.field)

    def __add__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._wrap(self.value + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._wrap(self.value - o)

    def __rsub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._wrap(o - self.value)

    def __mul__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._wrap(self.value * o)

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.value)

    def inverse(self) -> "FieldElement":
        return self._wrap(self.field.inv(self.value))

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self._wrap(self.value * self.field.inv(o))

    def __eq__(self, other):
        if isinstance(other, FieldElement):
            return self.field == other.field and self.value == other.value
        if isinstance(other, int):
            return self.value == other % self.field.p
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.field.p))

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"FieldElement({self.value})"

    def to_bytes(self) -> bytes:
        return self.field.encode(self.value)

    @classmethod
    def from_bytes(cls, data: bytes, field: Field) -> "FieldElement":
        return cls(field.decode(data), field)


# ---------------------------------------------------------------------------
# Big unsigned integers in machine words, and radix-limb arithmetic.


@dataclass(frozen=True)
class BigUint:
    """Unsigned integer stored as little-endian 64-bit words, bounded by ``width`` bits."""

    limbs: tuple[int, ...]
    width: int

    def __post_init__(self):
        if any(not 0 <= w <= _WORD_MASK for w in self.limbs):
            raise ValueError("limb out of word range")
        if self.limbs and self.limbs[-1] == 0:
            raise ValueError("BigUint limbs must be normalized (no trailing zero words)")
        if self.to_int().bit_length() > self.width:
            raise ValueError(f"value exceeds {self.width}-bit width")

    @classmethod
    def from_int(cls, value: int, width: int) -> "BigUint":
        if value < 0:
            raise ValueError("BigUint is unsigned")
        words = []
        while value:
            words.append(value & _WORD_MASK)
            value >>= WORD_BITS
        return cls(tuple(words), width)

    def to_int(self) -> int:
        v = 0
        for w in reversed(self.limbs):
            v = (v << WORD_BITS) | w
        return v

    def __int__(self):
        return self.to_int()

    def bit_length(self) -> int:
        return self.to_int().bit_length()


def to_radix(value: int, k: int, count: int) -> list[int]:
    """Little-endian base-2^k digits of ``value``, exactly ``count`` of them."""
    if value < 0 or value >> (k * count):
        raise ValueError(f"value does not fit in {count} limbs of {k} bits")
    mask = (1 << k) - 1
    return [(value >> (k * i)) & mask for i in range(count)]


def from_radix(digits: Iterable[int], k: int) -> int:
    v = 0
    for d in reversed(list(digits)):
        v = (v << k) + d
    return v


@dataclass(frozen=True)
class ReductionBounds:
    """Sizing of the carry chain that proves ``x*y = q*n + r`` over limbs.

    ``max_residual`` bounds the magnitude of every carry-chain equation for any
    range-checked assignment; it must stay below p for the field equation to
    imply the integer one.
    """

    limb_bits: int
    num_limbs: int
    carry_bits: int
    carry_offset: int
    max_residual: int


def reduction_bounds(k: int, m: int) -> ReductionBounds:
    base = 1 << k
    max_diff = m * (base - 1) ** 2 + (base - 1)
    honest_carry = max_diff // (base - 1) + 1
    carry_bits = honest_carry.bit_length() + 1
    offset = 1 << (carry_bits - 1)
    max_residual = max_diff + offset + base * offset
    return ReductionBounds(k, m, carry_bits, offset, max_residual)


def radix_bits(field: Field, modulus_bits: int) -> int:
    """Limb width for multiplying ``modulus_bits``-bit integers over ``field``.

    Starts at floor(bitlen(p)/2) - 2 and steps down until the carry chain of
    the in-circuit reduction cannot wrap modulo p.
    """
    k = field.bits // 2 - 2
    while k > 1:
        m = -(-modulus_bits // k)
        if reduction_bounds(k, m).max_residual < field.p:
            return k
        k -= 1
    raise ValueError(f"no safe limb radix for {modulus_bits}-bit moduli over a {field.bits}-bit field")


def _normalize(digits: Sequence[int], k: int) -> list[int]:
    mask = (1 << k) - 1
    out = []
    carry = 0
    for d in digits:
        t = d + carry
        out.append(t & mask)
        carry = t >> k
    while carry:
        out.append(carry & mask)
        carry >>= k
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return out


def limb_convolution(x: Sequence[int], y: Sequence[int]) -> list[int]:
    """Un-normalized product digits: z_j = sum_i x_i * y_{j-i}."""
    z = [0] * (len(x) + len(y) - 1)
    for i, xi in enumerate(x):
        if xi:
            for j, yj in enumerate(y):
                z[i + j] += xi * yj
    return z


def _shl(d: list[int], s: int, k: int) -> list[int]:
    if s == 0:
        return list(d)
    mask = (1 << k) - 1
    out = []
    carry = 0
    for x in d:
        t = (x << s) | carry
        out.append(t & mask)
        carry = t >> k
    out.append(carry)
    return out


def _shr(d: list[int], s: int, k: int) -> list[int]:
    if s == 0:
        return list(d)
    mask = (1 << k) - 1
    out = []
    for i, x in enumerate(d):
        hi = d[i + 1] if i + 1 < len(d) else 0
        out.append(((x >> s) | (hi << (k - s))) & mask)
    return out


def limb_divmod(u: Sequence[int], v: Sequence[int], k: int) -> tuple[list[int], list[int]]:
    """Long division of radix-2^k digit vectors (Knuth, TAOCP vol. 2, Algorithm D)."""
    base = 1 << k
    mask = base - 1
    v = _normalize(v, k)
    u = _normalize(u, k)
    if v == [0]:
        raise ZeroDivisionError("division by zero")
    n = len(v)
    if len(u) < n:
        return [0], list(u)
    if n == 1:
        q = []
        r = 0
        for d in reversed(u):
            cur = (r << k) | d
            q.append(cur // v[0])
            r = cur % v[0]
        return _normalize(list(reversed(q)), k), [r]

    m = len(u) - n
    s = k - v[-1].bit_length()
    vn = _shl(v, s, k)[:n]
    un = _shl(u, s, k)
    if len(un) == len(u):
        un.append(0)
    q = [0] * (m + 1)
    for j in range(m, -1, -1):
        num = (un[j + n] << k) | un[j + n - 1]
        qhat, rhat = divmod(num, vn[n - 1])
        while qhat >= base or qhat * vn[n - 2] > ((rhat << k) | un[j + n - 2]):
            qhat -= 1
            rhat += vn[n - 1]
            if rhat >= base:
                break
        borrow = 0
        carry = 0
        for i in range(n):
            prod = qhat * vn[i] + carry
            carry = prod >> k
            t = un[i + j] - (prod & mask) - borrow
            un[i + j] = t & mask
            borrow = 1 if t < 0 else 0
        t = un[j + n] - carry - borrow
        un[j + n] = t & mask
        if t < 0:
            qhat -= 1
            carry = 0
            for i in range(n):
                t = un[i + j] + vn[i] + carry
                un[i + j] = t & mask
                carry = t >> k
            un[j + n] = (un[j + n] + carry) & mask
        q[j] = qhat
    r = _shr(un[:n], s, k)
    return _normalize(q, k), _normalize(r, k)


def bigmul_radix(x: BigUint, y: BigUint, modulus: BigUint, field: Field) -> BigUint:
    """(x * y) mod modulus, computed over base-2^k limbs sized for ``field``.

    Every limb-product sum is bounded below p, so the same digit vectors can be
    carried as field elements by the in-circuit verifier.
    """
    n = modulus.to_int()
    xv, yv = x.to_int(), y.to_int()
    if n == 0:
        raise ValueError("modulus must be nonzero")
    if xv >= n or yv >= n:
        raise ValueError("operands must be reduced below the modulus")
    nbits = max(modulus.width, n.bit_length())
    k = radix_bits(field, nbits)
    m = -(-nbits // k)
    if m * ((1 << k) - 1) ** 2 >= field.p:
        raise ValueError("limb products would overflow the field")
    z = limb_convolution(to_radix(xv, k, m), to_radix(yv, k, m))
    _, r = limb_divmod(_normalize(z, k), to_radix(n, k, m), k)
    return BigUint.from_int(from_radix(r, k), modulus.width)
