"""Random contact graphs for property tests."""

from __future__ import annotations

import random

from .scenario import AgentSpec, AuthoritySpec, Diagnosis, Encounter, ScenarioConfig

# short windows so multi-hop chains fit inside a couple hundred epochs
RANDOM_PARAMS = {"incubation_epochs": 6, "contact_window_epochs": 60, "health_window_epochs": 12}


def random_scenario(seed: int, *, max_agents: int = 10, max_epoch: int = 200, max_encounters: int = 25) -> ScenarioConfig:
    r = random.Random(seed)
    n = r.randint(2, max_agents)
    agents = tuple(AgentSpec(f"a{i}") for i in range(n))
    encounters = []
    for _ in range(r.randint(1, max_encounters)):
        a, b = r.sample(range(n), 2)
        encounters.append(Encounter(f"a{a}", f"a{b}", r.randrange(max_epoch)))
    diagnoses = tuple(
        Diagnosis(f"a{r.randrange(n)}", r.randrange(max_epoch), "positive", "clinic") for _ in range(r.randint(1, 3))
    )
    return ScenarioConfig(
        f"random-{seed}",
        agents,
        (AuthoritySpec("clinic", 1),),
        tuple(sorted(encounters, key=lambda e: e.epoch)),
        diagnoses,
        seed=seed,
        preset="toy",
        end_epoch=max_epoch + 12,
        params=dict(RANDOM_PARAMS),
    )
