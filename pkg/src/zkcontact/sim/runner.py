"""Discrete-event driver for multi-agent scenarios on a virtual epoch clock."""

from __future__ import annotations

import heapq
import logging
import random
from dataclasses import dataclass, field
from typing import Optional

from ..engine import ProveError
from ..protocol import (
    AgentState,
    Authority,
    AuthorityRefusal,
    AuthorityRegistry,
    ProtocolKeys,
    chain_source,
    setup,
)
from ..r1cs import WitnessError
from ..registry import LoopbackTransport, Registry, RegistryClient
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)

_ENCOUNTER, _DIAGNOSIS, _SCAN = 0, 1, 2


@dataclass(frozen=True)
class NotificationEvent:
    agent: str
    epoch: int
    order: int
    h: int
    exposure_epoch: int

    @property
    def latency(self) -> int:
        return self.epoch - self.exposure_epoch


@dataclass
class SimMetrics:
    scenario: str
    transitive: bool
    notifications: list[NotificationEvent] = field(default_factory=list)
    published: int = 0
    duplicates: int = 0
    invalid: int = 0
    refused: list[str] = field(default_factory=list)
    unverified: list[str] = field(default_factory=list)
    scans: int = 0
    registry_entries: int = 0

    def first_notification(self, agent: str) -> Optional[NotificationEvent]:
        evs = [n for n in self.notifications if n.agent == agent]
        return min(evs, key=lambda n: (n.epoch, n.order)) if evs else None

    def latency_table(self) -> list[NotificationEvent]:
        """Earliest notification per agent, sorted by agent id."""
        firsts = {}
        for n in self.notifications:
            cur = firsts.get(n.agent)
            if cur is None or (n.epoch, n.order) < (cur.epoch, cur.order):
                firsts[n.agent] = n
        return [firsts[a] for a in sorted(firsts)]


class Simulation:
    def __init__(
        self,
        cfg: ScenarioConfig,
        *,
        client: Optional[RegistryClient] = None,
        registry: Optional[Registry] = None,
        keys: Optional[ProtocolKeys] = None,
    ):
        """Host ``registry`` in-process (a fresh in-memory one by default), or talk to ``client``."""
        self.cfg = cfg
        self.params = cfg.protocol_params()
        self.rng = random.Random(cfg.seed)
        self.authorities = {a.id: Authority(a.id, self.params, a.seed) for a in cfg.authorities}
        self.authority_registry = AuthorityRegistry(self.authorities.values())
        self.keys = keys or setup(self.params, self.authority_registry.commitments)
        for a in self.authorities.values():
            a.keys = self.keys
        self.agents = {a.id: AgentState(self.params, rng=self.rng, agent_id=a.id) for a in cfg.agents}
        self.beacons = {a.id for a in cfg.agents if a.beacon}
        self.now = 0
        self.registry = None
        if client is None:
            if registry is None:
                registry = Registry()
            # received_at follows the virtual clock so runs stay reproducible
            registry.clock = lambda: self.now * self.params.epoch_seconds
            self.registry = registry
            client = RegistryClient(LoopbackTransport(registry))
        self.client = client
        self.cursors = {a: 0 for a in self.agents}
        self.notified: set[tuple[str, int]] = set()
        self.metrics = SimMetrics(cfg.name, cfg.transitive)

    # events ----------------------------------------------------------------

    def _queue(self):
        cfg = self.cfg
        q = []
        n = 0
        for e in cfg.encounters:
            q.append((e.epoch, _ENCOUNTER, n, e))
            n += 1
        for d in cfg.diagnoses:
            q.append((d.epoch, _DIAGNOSIS, n, d))
            n += 1
        end = cfg.end_epoch if cfg.end_epoch >= 0 else cfg.last_event_epoch + cfg.scan_interval
        for t in range(0, end + 1, cfg.scan_interval):
            q.append((t, _SCAN, n, None))
            n += 1
        heapq.heapify(q)
        return q

    def _encounter(self, e) -> None:
        a, b = self.agents[e.a], self.agents[e.b]
        ta, tb = a.broadcast(e.epoch), b.broadcast(e.epoch)
        a.record_contact(tb, e.epoch)
        b.record_contact(ta, e.epoch)

    def _publish(self, agent: AgentState, bundle) -> None:
        r = self.client.publish(bundle.to_bytes())
        agent.published.add(bundle.index_key)
        agent.emitted.append(bundle)
        if r.accepted:
            self.metrics.published += 1
        elif r.status.name == "DUPLICATE":
            self.metrics.duplicates += 1
        else:
            self.metrics.invalid += 1
            self.metrics.refused.append(f"{agent.id}: registry rejected bundle ({r.reason})")

    def _diagnosis(self, d) -> None:
        agent = self.agents[d.agent]
        auth = self.authorities[d.authority] if d.authority else next(iter(self.authorities.values()))
        try:
            cred = agent.request_credential(d.status, d.epoch, auth)
        except AuthorityRefusal as e:
            self.metrics.refused.append(f"{d.agent}@{d.epoch}: authority refused ({e})")
            return
        if d.status != "positive":
            return
        try:
            bundles = agent.build_contact_bundles(
                cred, self.keys, authority_modulus=auth.modulus, with_pcd=self.cfg.transitive
            )
        except (ProveError, WitnessError) as e:
            self.metrics.refused.append(f"{d.agent}@{d.epoch}: {e}")
            return
        for b in bundles:
            self._publish(agent, b)

    def _scan_round(self) -> int:
        """One pass of every agent over new registry entries; returns bundles published."""
        published = 0
        for aid in sorted(self.agents):
            agent = self.agents[aid]
            entries = []
            while True:
                page, nxt = self.client.query_since(self.cursors[aid])
                if not page:
                    break
                entries += page
                self.cursors[aid] = nxt
            for m in agent.scan_and_match(entries, self.keys, self.authority_registry):
                if not m.verified:
                    self.metrics.unverified.append(f"{aid}: {m.reason}")
                    continue
                if (aid, m.h) in self.notified:
                    continue
                self.notified.add((aid, m.h))
                rec = agent.contact_log[m.h]
                self.metrics.notifications.append(NotificationEvent(aid, self.now, m.order, m.h, rec.t))
                published += self._propagate(agent, m)
        return published

    def _propagate(self, agent: AgentState, m) -> int:
        if not self.cfg.transitive:
            return 0
        if not (self.cfg.auto_transitive or agent.id in self.beacons):
            return 0
        src = chain_source(m.bundle)
        if src is None:
            return 0
        n = 0
        for onward in agent.onward_contacts(agent.contact_log[m.h]):
            if onward.h in agent.published:
                continue
            try:
                tb = agent.build_transitive_bundle((m.h, src), onward, self.keys)
            except (ProveError, WitnessError) as e:
                self.metrics.refused.append(f"{agent.id}@{self.now}: {e}")
                continue
            self._publish(agent, tb)
            n += 1
        return n

    def _scan(self) -> None:
        for a in self.agents.values():
            a.prune_contacts(self.now)
        self.metrics.scans += 1
        # keep scanning within the tick until nobody publishes anything new
        while self._scan_round():
            pass

    def run(self) -> SimMetrics:
        q = self._queue()
        while q:
            t, kind, _, ev = heapq.heappop(q)
            self.now = t
            for a in self.agents.values():
                a.advance(t)
            if kind == _ENCOUNTER:
                self._encounter(ev)
            elif kind == _DIAGNOSIS:
                self._diagnosis(ev)
            else:
                self._scan()
        if self.registry is not None:
            self.metrics.registry_entries = len(self.registry)
        else:
            self.metrics.registry_entries = sum(1 for _ in self.client.iter_since(0))
        return self.metrics


def run(cfg: ScenarioConfig, **kw) -> SimMetrics:
    return Simulation(cfg, **kw).run()
