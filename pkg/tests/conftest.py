import random

import pytest

from zkcontact.params import ProtocolParams
from zkcontact.protocol import AgentState, Authority, AuthorityRegistry, setup


@pytest.fixture(scope="session")
def toy():
    return ProtocolParams.toy()


@pytest.fixture(scope="session")
def toy_authority(toy):
    return Authority("clinic", toy, seed=1)


@pytest.fixture(scope="session")
def toy_authorities(toy_authority):
    return AuthorityRegistry([toy_authority])


@pytest.fixture(scope="session")
def toy_keys(toy, toy_authority, toy_authorities):
    keys = setup(toy, toy_authorities.commitments)
    toy_authority.keys = keys
    return keys


@pytest.fixture
def rng():
    return random.Random(1234)


class World:
    """Alice met Bob at t1, Bob met Charlie at t2, Alice diagnosed at t_diag."""

    def __init__(self, params, authority, keys, rng, t1=100, gap=None, t_diag=None):
        self.params = params
        self.authority = authority
        self.keys = keys
        self.alice, self.bob, self.charlie = (AgentState(params, rng=rng, agent_id=n) for n in ("alice", "bob", "charlie"))
        self.t1 = t1
        self.t2 = t1 + (params.incubation_epochs + 10 if gap is None else gap)
        self.t_diag = self.t2 + 5 if t_diag is None else t_diag
        ta, tb = self.alice.broadcast(self.t1), self.bob.broadcast(self.t1)
        self.h_ab = self.alice.record_contact(tb, self.t1)
        self.bob.record_contact(ta, self.t1)
        tb2, tc = self.bob.broadcast(self.t2), self.charlie.broadcast(self.t2)
        self.h_bc = self.bob.record_contact(tc, self.t2)
        self.charlie.record_contact(tb2, self.t2)

    def credential(self):
        return self.alice.request_credential("positive", self.t_diag, self.authority)

    def contact_bundle(self, with_pcd=True):
        cred = self.credential()
        (b,) = self.alice.build_contact_bundles(cred, self.keys, authority_modulus=self.authority.modulus, with_pcd=with_pcd)
        return b

    def transitive_bundle(self, first=None):
        first = first or self.contact_bundle()
        onward = self.bob.contact_log[self.h_bc]
        return self.bob.build_transitive_bundle((self.h_ab, first.first_hop), onward, self.keys)


@pytest.fixture
def world(toy, toy_authority, toy_keys, rng):
    return World(toy, toy_authority, toy_keys, rng)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    lines = test_acceptance.RESULTS
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
