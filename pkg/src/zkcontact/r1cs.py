"""Rank-1 constraint systems: linear combinations, a circuit builder, and
satisfaction checking.

Variable layout of a finished system: index 0 is the constant one, then the
``num_public`` public inputs, then the ``num_aux`` witness variables.
"""

from __future__ import annotations

import hashlib
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field as dc_field
from typing import Iterator, Optional, Sequence

import numpy as np

from .field import Field

MAGIC = b"R1CS"
FORMAT_VERSION = 1

Row = tuple[tuple[int, int], ...]
Digest = bytes


class DimensionError(ValueError):
    """Assignment shape does not match the constraint system."""


class WitnessError(ValueError):
    """Honest witness generation is impossible for the supplied values."""


class LC:
    """Sparse linear combination over builder variable ids (0 is the constant one)."""

    __slots__ = ("terms", "p")

    def __init__(self, terms: dict[int, int], p: int):
        self.terms = terms
        self.p = p

    def _lift(self, other) -> "LC":
        if isinstance(other, LC):
            return other
        if isinstance(other, int):
            return LC({0: other % self.p} if other % self.p else {}, self.p)
        raise TypeError(f"cannot combine LC with {type(other).__name__}")

    def __add__(self, other) -> "LC":
        o = self._lift(other)
        p = self.p
        t = dict(self.terms)
        for k, c in o.terms.items():
            v = (t.get(k, 0) + c) % p
            if v:
                t[k] = v
            else:
                t.pop(k, None)
        return LC(t, p)

    __radd__ = __add__

    @classmethod
    def combine(cls, pairs, p: int) -> "LC":
        """sum(c * lc for c, lc in pairs) in one pass; repeated + is quadratic."""
        t: dict[int, int] = {}
        for c, lc in pairs:
            for k, v in lc.terms.items():
                t[k] = (t.get(k, 0) + c * v) % p
        return cls({k: v for k, v in t.items() if v}, p)

    def __neg__(self) -> "LC":
        p = self.p
        return LC({k: (-c) % p for k, c in self.terms.items()}, p)

    def __sub__(self, other) -> "LC":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "LC":
        return self._lift(other) + (-self)

    def __mul__(self, scalar: int) -> "LC":
        if isinstance(scalar, LC):
            raise TypeError("LC * LC is not linear; use Builder.mul")
        s = scalar % self.p
        if s == 0:
            return LC({}, self.p)
        p = self.p
        return LC({k: (c * s) % p for k, c in self.terms.items()}, p)

    __rmul__ = __mul__

    def is_constant(self) -> bool:
        return all(k == 0 for k in self.terms)

    def __repr__(self):
        return f"LC({self.terms})"


@dataclass(frozen=True)
class Assignment:
    """Public inputs ``x`` and witness ``a`` as canonical ints."""

    public: tuple[int, ...]
    aux: tuple[int, ...]

    def full(self) -> tuple[int, ...]:
        return (1,) + self.public + self.aux


@dataclass(frozen=True)
class ConstraintSystem:
    p: int
    num_public: int
    num_aux: int
    constraints: tuple[tuple[Row, Row, Row], ...]

    def __post_init__(self):
        n = self.num_vars
        for i, con in enumerate(self.constraints):
            for row in con:
                for idx, _ in row:
                    if not 0 <= idx < n:
                        raise ValueError(f"constraint {i} references variable {idx} >= {n}")

    @property
    def num_vars(self) -> int:
        return 1 + self.num_public + self.num_aux

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def field(self) -> Field:
        return Field(self.p)


def _dot(row: Row, w: Sequence[int]) -> int:
    return sum(c * w[i] for i, c in row)


def _check_dims(cs: ConstraintSystem, w: Assignment) -> None:
    if len(w.public) != cs.num_public or len(w.aux) != cs.num_aux:
        raise DimensionError(
            f"assignment has {len(w.public)} public / {len(w.aux)} aux values, "
            f"system expects {cs.num_public} / {cs.num_aux}"
        )


def unsatisfied(cs: ConstraintSystem, w: Assignment) -> list[int]:
    """Indices of constraints whose residual is nonzero."""
    _check_dims(cs, w)
    full = w.full()
    p = cs.p
    return [
        i
        for i, (a, b, c) in enumerate(cs.constraints)
        if (_dot(a, full) * _dot(b, full) - _dot(c, full)) % p
    ]


def cs_check(cs: ConstraintSystem, w: Assignment) -> bool:
    """True iff <A,w>*<B,w> = <C,w> for every constraint, with w = (1 || x || a)."""
    _check_dims(cs, w)
    full = w.full()
    p = cs.p
    for a, b, c in cs.constraints:
        if (_dot(a, full) * _dot(b, full) - _dot(c, full)) % p:
            return False
    return True


def cs_check_batch(cs: ConstraintSystem, public: np.ndarray, aux: np.ndarray) -> np.ndarray:
    """Vectorized cs_check over N assignments given as (N, n) arrays.

    Uses int64 arithmetic when p < 2^31, object arrays otherwise.
    """
    public = np.asarray(public)
    aux = np.asarray(aux)
    n = public.shape[0]
    if public.shape != (n, cs.num_public) or aux.shape != (n, cs.num_aux):
        raise DimensionError("batch shape does not match the constraint system")
    dtype = np.int64 if cs.p < (1 << 31) else object
    w = np.empty((cs.num_vars, n), dtype=dtype)
    w[0] = 1
    w[1 : 1 + cs.num_public] = public.T.astype(dtype)
    w[1 + cs.num_public :] = aux.T.astype(dtype)
    p = cs.p
    ok = np.ones(n, dtype=bool)

    def ev(row: Row):
        acc = np.zeros(n, dtype=dtype)
        for idx, coef in row:
            acc = (acc + coef * w[idx]) % p
        return acc

    for a, b, c in cs.constraints:
        res = (ev(a) * ev(b) - ev(c)) % p
        ok &= res == 0
    return ok


# ---------------------------------------------------------------------------
# Canonical serialization


def serialize_cs(cs: ConstraintSystem) -> bytes:
    f = cs.field
    width = f.byte_len
    prime = cs.p.to_bytes(width, "big")
    out = [MAGIC, struct.pack(">HH", FORMAT_VERSION, width), prime]
    out.append(struct.pack(">III", cs.num_public, cs.num_aux, len(cs.constraints)))
    for con in cs.constraints:
        for row in con:
            out.append(struct.pack(">I", len(row)))
            for idx, coef in row:
                out.append(struct.pack(">I", idx))
                out.append(coef.to_bytes(width, "big"))
    return b"".join(out)


def deserialize_cs(data: bytes) -> ConstraintSystem:
    mv = memoryview(data)
    if bytes(mv[:4]) != MAGIC:
        raise ValueError("bad constraint-system magic")
    version, width = struct.unpack_from(">HH", mv, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported constraint-system format version {version}")
    pos = 8
    p = int.from_bytes(mv[pos : pos + width], "big")
    pos += width
    num_public, num_aux, count = struct.unpack_from(">III", mv, pos)
    pos += 12
    constraints = []
    for _ in range(count):
        rows = []
        for _ in range(3):
            (nterms,) = struct.unpack_from(">I", mv, pos)
            pos += 4
            row = []
            for _ in range(nterms):
                (idx,) = struct.unpack_from(">I", mv, pos)
                pos += 4
                row.append((idx, int.from_bytes(mv[pos : pos + width], "big")))
                pos += width
            rows.append(tuple(row))
        constraints.append(tuple(rows))
    if pos != len(data):
        raise ValueError("trailing bytes after constraint system")
    return ConstraintSystem(p, num_public, num_aux, tuple(constraints))


def circuit_digest(cs: ConstraintSystem) -> Digest:
    return hashlib.sha256(serialize_cs(cs)).digest()


# ---------------------------------------------------------------------------
# Builder


@dataclass
class GadgetHandle:
    name: str
    depth: int
    input_vars: list[int] = dc_field(default_factory=list)
    output_vars: list[int] = dc_field(default_factory=list)
    constraint_span: tuple[int, int] = (0, 0)

    @property
    def num_constraints(self) -> int:
        return self.constraint_span[1] - self.constraint_span[0]


class Builder:
    """Accumulates constraints and, when ``witness`` is set, variable values.

    The same synthesis code runs in shape mode (key generation) and witness mode
    (proving), so both produce identical systems. With ``strict=False`` the
    gadgets never raise :class:`WitnessError`; they fill in best-effort values
    so the resulting assignment can be checked (and rejected).
    """

    def __init__(self, field: Field, *, witness: bool = True, strict: bool = True):
        self.field = field
        self.p = field.p
        self.witness = witness
        self.strict = strict
        self.one = LC({0: 1}, self.p)
        self._public_names: list[str] = []
        self._public_vals: list[Optional[int]] = []
        self._aux_vals: list[Optional[int]] = []
        self._constraints: list[tuple[LC, LC, LC]] = []
        self.gadgets: list[GadgetHandle] = []
        self._depth = 0
        self.labels: dict[str, LC] = {}

    # variables -------------------------------------------------------------

    def const(self, c: int) -> LC:
        return self.one * c

    def _check_value(self, value):
        if self.witness:
            if value is None:
                raise WitnessError("witness mode requires a value for every variable")
            return value % self.p
        return None

    def public(self, name: str, value: Optional[int] = None) -> LC:
        self._public_names.append(name)
        self._public_vals.append(self._check_value(value))
        return LC({-len(self._public_vals): 1}, self.p)

    def alloc(self, value: Optional[int] = None) -> LC:
        self._aux_vals.append(self._check_value(value))
        return LC({len(self._aux_vals): 1}, self.p)

    def value(self, lc: LC) -> Optional[int]:
        if not self.witness:
            return None
        acc = 0
        for k, c in lc.terms.items():
            if k == 0:
                acc += c
            elif k > 0:
                acc += c * self._aux_vals[k - 1]
            else:
                acc += c * self._public_vals[-k - 1]
        return acc % self.p

    def fail(self, msg: str) -> None:
        """Report an impossible honest witness (no-op in non-strict mode)."""
        if self.witness and self.strict:
            raise WitnessError(msg)

    @property
    def num_constraints(self) -> int:
        return len(self._constraints)

    def aux_index(self, lc: LC) -> int:
        """Position within the aux vector of a single-variable LC."""
        (k,) = lc.terms
        if k <= 0:
            raise ValueError("not an aux variable")
        return k - 1

    # constraints -----------------------------------------------------------

    def enforce(self, a, b, c) -> None:
        lift = self.one._lift
        self._constraints.append((lift(a), lift(b), lift(c)))

    def enforce_equal(self, a, b) -> None:
        self.enforce(self.one._lift(a) - b, self.one, 0)

    def mul(self, a: LC, b: LC) -> LC:
        va, vb = self.value(a), self.value(b)
        out = self.alloc(None if va is None else va * vb)
        self.enforce(a, b, out)
        return out

    def enforce_boolean(self, x: LC) -> None:
        self.enforce(x, x - 1, 0)

    @contextmanager
    def gadget(self, name: str) -> Iterator[GadgetHandle]:
        h = GadgetHandle(name, self._depth)
        start = len(self._constraints)
        self._depth += 1
        try:
            yield h
        finally:
            self._depth -= 1
            h.constraint_span = (start, len(self._constraints))
            self.gadgets.append(h)

    # output ----------------------------------------------------------------

    @property
    def public_names(self) -> list[str]:
        return list(self._public_names)

    def _index_map(self):
        n_pub = len(self._public_vals)

        def idx(k: int) -> int:
            if k == 0:
                return 0
            if k < 0:
                return -k
            return n_pub + k

        return idx

    def build(self) -> tuple[ConstraintSystem, Optional[Assignment]]:
        idx = self._index_map()

        def row(lc: LC) -> Row:
            return tuple(sorted((idx(k), c) for k, c in lc.terms.items()))

        cons = tuple((row(a), row(b), row(c)) for a, b, c in self._constraints)
        for h in self.gadgets:
            h.input_vars = [idx(k) for k in h.input_vars]
            h.output_vars = [idx(k) for k in h.output_vars]
        cs = ConstraintSystem(self.p, len(self._public_vals), len(self._aux_vals), cons)
        if not self.witness:
            return cs, None
        return cs, Assignment(tuple(self._public_vals), tuple(self._aux_vals))

    def var_index(self, lc: LC) -> int:
        """Final system index of a single-variable LC."""
        (k,) = lc.terms
        return self._index_map()(k)


def var_ids(*lcs: LC) -> list[int]:
    """Builder ids of the non-constant variables referenced by ``lcs``."""
    seen: dict[int, None] = {}
    for lc in lcs:
        for k in lc.terms:
            if k != 0:
                seen[k] = None
    return list(seen)
