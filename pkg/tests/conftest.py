"""
Shared fixtures and golden vectors.

Golden chain: seed = 32 zero bytes, n = 3. Values computed independently with
sha256sum and shell XOR.
"""

import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from app.hashchain import build_chain, trust_anchor  # noqa: E402
from app.roles import Administrator, CubeSat  # noqa: E402
from app.storage import MemoryStorage  # noqa: E402

ZERO_SEED = bytes(32)

T1 = bytes.fromhex("66687aadf862bd776c8fc18b8e9f8e20089714856ee233b3902a591d0d5f2925")
T2 = bytes.fromhex("2b32db6c2c0a6235fb1397e8225ea85e0f0e6e8c7b126d0016ccbde0e667151e")
T3 = bytes.fromhex("12771355e46cd47c71ed1721fd5319b383cca3a1f9fce3aa1c8cd3bd37af20d7")

# PT = h(payload || AT_prev)
PT_SW1_T3 = bytes.fromhex("358212c3a53054efbcba857e95a3f3c2b3f54b83257ac9e002dd0f51de99a268")
PT_SW2_T2 = bytes.fromhex("05c9559bd6dfde75f9ba749a9ad4c56db540312ac1b99bc439882826b793110a")
PT_EMPTY_T3 = bytes.fromhex("fe15c0d3ebe314fad720a08b839a004c2e6386f5aecc19ec74807d1920cb6aeb")

# TT = AT_curr XOR PT
TT1 = bytes.fromhex("1eb0c9af893a36da47a91296b7fd5b9cbcfb250f5e68a4e01411b2b138feb776")
TT2 = bytes.fromhex("63a12f362ebd63029535b511144b4b4dbdd725afaf5ba877a9a2713bbacc382f")

SCENARIO_DIR = os.path.join(ROOT, "scenarios")


@pytest.fixture
def golden_chain():
    """Zero-seed chain of length 3 (fresh copy per test)"""
    return build_chain(ZERO_SEED, 3)


@pytest.fixture
def golden_pair(golden_chain):
    """Administrator and CubeSat provisioned with the golden chain"""
    admin = Administrator()
    admin.register_chain(golden_chain)
    cs = CubeSat.provision(golden_chain.chain_id, trust_anchor(golden_chain), storage=MemoryStorage())
    return admin, cs


@pytest.fixture
def main_script():
    return os.path.join(ROOT, "main.py")
