"""Protocol configuration, loaded from the packaged ``params.toml``."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from functools import lru_cache
from importlib import resources

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .field import Field, radix_bits
from .gadgets import SubsetSumParams, subset_sum_params


@lru_cache(maxsize=1)
def protocol_file() -> dict:
    with resources.files("zkcontact").joinpath("params.toml").open("rb") as fh:
        return tomllib.load(fh)


def named_prime(name: str) -> int:
    primes = protocol_file()["field"]["primes"]
    if name in primes:
        return int(primes[name])
    try:
        return int(name)
    except ValueError:
        raise ValueError(f"unknown field prime {name!r}; known: {sorted(primes)}") from None


_P = protocol_file()
_T = _P["time"]
_DAY = 86400


@dataclass(frozen=True)
class ProtocolParams:
    """Everything a circuit or an agent needs to agree on.

    Window lengths default to whole days of epochs (14 -> 4032, 3 -> 864,
    1 -> 288 at five-minute epochs). The two transitive bounds can be
    switched off individually.
    """

    field_prime: int = named_prime(_P["field"]["default"])
    epoch_seconds: int = _T["epoch_seconds"]
    contact_window_epochs: int = 0
    incubation_epochs: int = 0
    health_window_epochs: int = 0
    epoch_bits: int = _T["epoch_bits"]
    status_bits: int = _P["status"]["bits"]
    status_positive: int = _P["status"]["positive"]
    status_negative: int = _P["status"]["negative"]
    rsa_bits: int = _P["rsa"]["modulus_bits"]
    transitive_lower_bound: bool = True
    transitive_upper_bound: bool = True

    def __post_init__(self):
        days = {
            "contact_window_epochs": _T["contact_window_days"],
            "incubation_epochs": _T["incubation_days"],
            "health_window_epochs": _T["health_window_days"],
        }
        for name, d in days.items():
            if getattr(self, name) == 0:
                object.__setattr__(self, name, d * _DAY // self.epoch_seconds)
        if self.status_positive == self.status_negative:
            raise ValueError("status codes must differ")
        if self.rsa_bits <= self.field.bits:
            raise ValueError("RSA modulus must be wider than the field so digests fit below it")

    @classmethod
    def toy(cls, **overrides) -> "ProtocolParams":
        """Small parameters for fast tests: 61-bit field, 256-bit RSA."""
        base = dict(field_prime=named_prime("m61"), rsa_bits=_P["rsa"]["toy_modulus_bits"])
        base.update(overrides)
        return cls(**base)

    def with_overrides(self, **kw) -> "ProtocolParams":
        return replace(self, **kw)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @property
    def field(self) -> Field:
        return Field(self.field_prime)

    @property
    def secret_bits(self) -> int:
        return self.field.bits - 1

    @property
    def token_bits(self) -> int:
        return self.field.bits - 1

    @property
    def limb_bits(self) -> int:
        return radix_bits(self.field, self.rsa_bits)

    @property
    def num_limbs(self) -> int:
        return -(-self.rsa_bits // self.limb_bits)

    def hash_params(self, role: str) -> SubsetSumParams:
        """Hash parameters for ``role`` in {diagnosis, token, contact, authority_key}."""
        tag = _P["hash"]["tags"][role].encode()
        sizes = {
            "diagnosis": self.secret_bits + self.status_bits + self.epoch_bits,
            "token": self.secret_bits + self.epoch_bits,
            "contact": 2 * self.token_bits + self.epoch_bits,
            "authority_key": self.num_limbs * self.limb_bits,
        }
        return subset_sum_params(tag, self.field_prime, sizes[role])

    def status_code(self, status: str | int) -> int:
        if isinstance(status, int):
            return status
        codes = {"positive": self.status_positive, "negative": self.status_negative}
        key = status.lower().removeprefix("covid.")
        if key not in codes:
            raise ValueError(f"unknown status {status!r}")
        return codes[key]


DEFAULT_PARAMS = ProtocolParams()
