import pytest

from dmind3.data import load_builtin
from dmind3.intent import SelectorRegistry
from dmind3.payload import TransactionPayload
from dmind3.policy import load_policy
from dmind3.replay import default_contexts
from dmind3.router import NetworkState

USER = "0x" + "a1" * 20
PEER = "0xb2b2b2b2b2b2b2b2b2b2b2b2b2b2b2b2b2b2b2b2"
ATTACKER = "0x" + "ee" * 20
TOKEN = "0x" + "d4" * 20


@pytest.fixture(scope="session")
def registry() -> SelectorRegistry:
    return SelectorRegistry.default()


@pytest.fixture(scope="session")
def default_policy():
    return load_policy(load_builtin("policy:default"))


@pytest.fixture(scope="session")
def strict_policy():
    return load_policy(load_builtin("policy:strict"))


@pytest.fixture(scope="session")
def override_policy():
    return load_policy(load_builtin("policy:user_override"))


@pytest.fixture(scope="session")
def tight_policy():
    return load_policy(load_builtin("policy:tight_budget"))


@pytest.fixture(scope="session")
def reference_network() -> NetworkState:
    return NetworkState.from_dict(load_builtin("network:reference"))


@pytest.fixture()
def contexts(default_policy):
    return default_contexts(default_policy)


def make_payload(*, sender=USER, to=TOKEN, value=0, data=b"", gas=60_000,
                 nonce=1, ui_claim=None, chain_id=1) -> TransactionPayload:
    return TransactionPayload(
        chain_id=chain_id, sender=sender, destination=to, value=value,
        calldata=data, gas_limit=gas, nonce=nonce, ui_claim=ui_claim,
    )
