import random

import pytest

from hbesso.idp import IdentityProvider, IdpConfig
from hbesso.keystore import KeyStore
from hbesso.sp import ServiceProvider, SpConfig

IDP_ENTITY = "idp.example"
SP_ENTITY = "sp.example"
FED_KEY_ID = "fed-sp.example"
MASTER_KEY_ID = "idp-master"

# low KDF cost keeps the suite fast; the KDF itself is tested separately
TEST_KDF_ITERATIONS = 8


class FakeClock:
    def __init__(self, start: float = 1_700_000_000.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


@pytest.fixture
def fake_clock():
    return FakeClock()


def make_key_store(seed: int = 11) -> KeyStore:
    rng = random.Random(seed)
    store = KeyStore()
    store.generate(MASTER_KEY_ID, rng)
    store.generate(FED_KEY_ID, rng)
    return store


@pytest.fixture
def key_store():
    return make_key_store()


def make_idp(key_store, clock, directory_path=None, seed=21, **overrides) -> IdentityProvider:
    fields = dict(
        entity_id=IDP_ENTITY,
        master_key_id=MASTER_KEY_ID,
        federation_keys={SP_ENTITY: FED_KEY_ID},
        kdf_iterations=TEST_KDF_ITERATIONS,
        directory_path=directory_path,
    )
    fields.update(overrides)
    return IdentityProvider(IdpConfig(**fields), key_store, clock=clock, rng=random.Random(seed))


def make_sp(key_store, clock, seed=22, **overrides) -> ServiceProvider:
    config = SpConfig(
        entity_id=SP_ENTITY,
        acs_url="http://127.0.0.1:0/acs",
        idp_url="http://127.0.0.1:0",
        federation_key_id=FED_KEY_ID,
        **overrides,
    )
    return ServiceProvider(config, key_store, clock=clock, rng=random.Random(seed))


@pytest.fixture
def idp(key_store, fake_clock):
    return make_idp(key_store, fake_clock)


@pytest.fixture
def sp(key_store, fake_clock):
    return make_sp(key_store, fake_clock)
