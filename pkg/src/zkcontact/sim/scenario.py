"""Declarative scenario files.

Scenarios are TOML: a ``[scenario]`` table, an optional ``[params]`` table
of protocol overrides, and arrays of ``[[authority]]``, ``[[agent]]``,
``[[encounter]]`` and ``[[diagnosis]]`` tables. See ``docs/scenario-format.md``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..params import ProtocolParams, named_prime


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    id: str
    beacon: bool = False


@dataclass(frozen=True)
class AuthoritySpec:
    id: str
    seed: int


@dataclass(frozen=True)
class Encounter:
    a: str
    b: str
    epoch: int


@dataclass(frozen=True)
class Diagnosis:
    agent: str
    epoch: int
    status: str = "positive"
    authority: str = ""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    agents: tuple[AgentSpec, ...]
    authorities: tuple[AuthoritySpec, ...] = ()
    encounters: tuple[Encounter, ...] = ()
    diagnoses: tuple[Diagnosis, ...] = ()
    seed: int = 0
    preset: str = "default"
    scan_interval: int = 12
    transitive: bool = True
    auto_transitive: bool = True
    end_epoch: int = -1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        validate(self)

    def protocol_params(self) -> ProtocolParams:
        base = ProtocolParams.toy() if self.preset == "toy" else ProtocolParams()
        over = dict(self.params)
        if "field_prime" in over and isinstance(over["field_prime"], str):
            over["field_prime"] = named_prime(over["field_prime"])
        return base.with_overrides(**over)

    def with_options(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    @property
    def last_event_epoch(self) -> int:
        epochs = [e.epoch for e in self.encounters] + [d.epoch for d in self.diagnoses]
        return max(epochs, default=0)


_SCENARIO_KEYS = {
    "name": str,
    "seed": int,
    "preset": str,
    "scan_interval": int,
    "transitive": bool,
    "auto_transitive": bool,
    "end_epoch": int,
}
_TABLES = {
    "agent": (AgentSpec, {"id": str, "beacon": bool}, {"id"}),
    "authority": (AuthoritySpec, {"id": str, "seed": int}, {"id", "seed"}),
    "encounter": (Encounter, {"a": str, "b": str, "epoch": int}, {"a", "b", "epoch"}),
    "diagnosis": (Diagnosis, {"agent": str, "epoch": int, "status": str, "authority": str}, {"agent", "epoch"}),
}
_PARAM_TYPES = {
    f.name: (bool if f.type in ("bool", bool) else int) for f in dataclasses.fields(ProtocolParams)
}


def _typed(where: str, value: Any, typ: type):
    ok = isinstance(value, typ) and not (typ is int and isinstance(value, bool))
    if not ok:
        raise ScenarioError(f"{where}: expected {typ.__name__}, got {type(value).__name__}")
    return value


def _check_keys(where: str, table: dict, allowed, required=()):
    for k in table:
        if k not in allowed:
            raise ScenarioError(f"{where}: unknown key {k!r}")
    for k in required:
        if k not in table:
            raise ScenarioError(f"{where}: missing required key {k!r}")


def from_dict(doc: dict) -> ScenarioConfig:
    _check_keys("top level", doc, {"scenario", "params", *_TABLES}, {"scenario"})
    head = doc["scenario"]
    _check_keys("[scenario]", head, _SCENARIO_KEYS, {"name"})
    kw = {k: _typed(f"[scenario].{k}", v, _SCENARIO_KEYS[k]) for k, v in head.items()}
    params = doc.get("params", {})
    for k, v in params.items():
        if k not in _PARAM_TYPES:
            raise ScenarioError(f"[params]: unknown key {k!r}")
        if k == "field_prime" and isinstance(v, str):
            continue
        _typed(f"[params].{k}", v, _PARAM_TYPES[k])
    kw["params"] = dict(params)
    plural = {"agent": "agents", "authority": "authorities", "encounter": "encounters", "diagnosis": "diagnoses"}
    for name, (cls, types, required) in _TABLES.items():
        rows = doc.get(name, [])
        if not isinstance(rows, list):
            raise ScenarioError(f"{name}: expected an array of tables ([[{name}]])")
        items = []
        for i, row in enumerate(rows):
            where = f"[[{name}]] #{i + 1}"
            _check_keys(where, row, types, required)
            items.append(cls(**{k: _typed(f"{where}.{k}", v, types[k]) for k, v in row.items()}))
        kw[plural[name]] = tuple(items)
    if "agents" not in kw or not kw["agents"]:
        raise ScenarioError("scenario needs at least one [[agent]]")
    return ScenarioConfig(**kw)


def validate(cfg: ScenarioConfig) -> None:
    ids = [a.id for a in cfg.agents]
    if len(set(ids)) != len(ids):
        raise ScenarioError("duplicate agent id")
    known = set(ids)
    auths = {a.id for a in cfg.authorities}
    if cfg.preset not in ("default", "toy"):
        raise ScenarioError(f"[scenario].preset: unknown preset {cfg.preset!r}")
    if cfg.scan_interval <= 0:
        raise ScenarioError("[scenario].scan_interval must be positive")
    for i, e in enumerate(cfg.encounters):
        for who in (e.a, e.b):
            if who not in known:
                raise ScenarioError(f"[[encounter]] #{i + 1}: unknown agent {who!r}")
        if e.a == e.b:
            raise ScenarioError(f"[[encounter]] #{i + 1}: agent {e.a!r} cannot meet itself")
        if e.epoch < 0:
            raise ScenarioError(f"[[encounter]] #{i + 1}: epoch must be non-negative")
    for i, d in enumerate(cfg.diagnoses):
        if d.agent not in known:
            raise ScenarioError(f"[[diagnosis]] #{i + 1}: unknown agent {d.agent!r}")
        if d.epoch < 0:
            raise ScenarioError(f"[[diagnosis]] #{i + 1}: epoch must be non-negative")
        if d.status not in ("positive", "negative"):
            raise ScenarioError(f"[[diagnosis]] #{i + 1}: unknown status {d.status!r}")
        if d.authority and d.authority not in auths:
            raise ScenarioError(f"[[diagnosis]] #{i + 1}: unknown authority {d.authority!r}")
        if not d.authority and not cfg.authorities:
            raise ScenarioError(f"[[diagnosis]] #{i + 1}: no authority configured")


def to_dict(cfg: ScenarioConfig) -> dict:
    head = {"name": cfg.name, "seed": cfg.seed, "preset": cfg.preset, "scan_interval": cfg.scan_interval}
    head.update(transitive=cfg.transitive, auto_transitive=cfg.auto_transitive, end_epoch=cfg.end_epoch)
    doc: dict = {"scenario": head}
    if cfg.params:
        doc["params"] = dict(cfg.params)
    doc["authority"] = [dataclasses.asdict(a) for a in cfg.authorities]
    doc["agent"] = [dataclasses.asdict(a) for a in cfg.agents]
    doc["encounter"] = [dataclasses.asdict(e) for e in cfg.encounters]
    doc["diagnosis"] = [dataclasses.asdict(d) for d in cfg.diagnoses]
    return {k: v for k, v in doc.items() if v != []}


def loads(text: str) -> ScenarioConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"syntax error: {e}") from None
    return from_dict(doc)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    # JSON string escapes are valid TOML basic-string escapes
    return json.dumps(str(v))


def _table(header: str, table: dict) -> list[str]:
    return [header] + [f"{k} = {_toml_value(v)}" for k, v in table.items()]


def dumps(cfg: ScenarioConfig) -> str:
    """Canonical text form: one header per table, one key per line."""
    doc = to_dict(cfg)
    blocks = [_table("[scenario]", doc["scenario"])]
    if "params" in doc:
        blocks.append(_table("[params]", doc["params"]))
    for name in ("authority", "agent", "encounter", "diagnosis"):
        blocks.extend(_table(f"[[{name}]]", row) for row in doc.get(name, []))
    return "\n\n".join("\n".join(b) for b in blocks) + "\n"


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Load a scenario file, or a shipped scenario by name."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and str(path) in shipped_scenarios():
        return loads(resources.files("zkcontact").joinpath("scenarios", f"{path}.toml").read_text())
    try:
        return loads(p.read_text())
    except ScenarioError as e:
        raise ScenarioError(f"{p}: {e}") from None


def shipped_scenarios() -> list[str]:
    d = resources.files("zkcontact").joinpath("scenarios")
    return sorted(f.name[:-5] for f in d.iterdir() if f.name.endswith(".toml"))
