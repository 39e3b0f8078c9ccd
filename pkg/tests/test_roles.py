"""
Tests cho Administrator, GroundStation và CubeSat
"""

import hashlib
import itertools
import os
import random

import pytest
from hypothesis import given, settings, strategies as st

from app.config import HASH_BLOCK_SIZE
from app.exceptions import ChainExhaustedError, IntegrityError, PendingBundleError, UnknownChainError
from app.hashchain import build_chain, trust_anchor
from app.models import (
    MESSAGE_FAILED, MESSAGE_SUCCESS, REASON_DECODE_ERROR, REASON_NOT_ANCHORED, REASON_TOKEN_MISMATCH,
    STATUS_SUCCESS, UpdateReport,
    SoftwareUpdatePackage, UpdateBundle,
)
from app.roles import (
    Administrator, CubeSat, GroundStation, admin_acknowledge, admin_issue, admin_provision,
    admin_retransmit, cs_handle, cs_persist, cs_restore, encode_state, gs_relay,
)
from app.storage import FileStorage, MemoryStorage
from app.utils import counting_hashes
from app.wire import encode_bundle

from tests.conftest import T1, T2, T3, TT1, TT2

SW1 = SoftwareUpdatePackage(payload=b"sw1", name="sw1")
SW2 = SoftwareUpdatePackage(payload=b"sw2", name="sw2")


def provisioned(n: int, storage=None):
    admin = Administrator()
    chain_id, anchor = admin_provision(admin, n)
    cs = CubeSat.provision(chain_id, anchor, storage=storage)
    return admin, chain_id, cs


# -- Administrator -----------------------------------------------------------

def test_n3_supports_exactly_two_updates():
    admin, chain_id, cs = provisioned(3)
    for sup in (SW1, SW2):
        report = cs_handle(cs, admin_issue(admin, chain_id, sup))
        assert report.success
        admin_acknowledge(admin, chain_id, report)
    with pytest.raises(ChainExhaustedError):
        admin_issue(admin, chain_id, SW1)


def test_n2_supports_one_update():
    admin, chain_id, _ = provisioned(2)
    admin_issue(admin, chain_id, SW1)
    with pytest.raises(ChainExhaustedError):
        admin_issue(admin, chain_id, SW2)


def test_two_provisions_are_distinct():
    admin = Administrator()
    first = admin_provision(admin, 3)
    second = admin_provision(admin, 3)
    assert first[0] != second[0]
    assert first[1] != second[1]


def test_issue_golden_bundles(golden_pair, golden_chain):
    admin, _ = golden_pair
    bundle = admin.issue(golden_chain.chain_id, SW1)
    assert bundle == UpdateBundle(chain_id=golden_chain.chain_id, ordinal=1, payload=b"sw1", tt=TT1)
    admin.acknowledge(golden_chain.chain_id, cs_ok(golden_chain.chain_id, 1))
    assert admin.issue(golden_chain.chain_id, SW2).tt == TT2


def cs_ok(chain_id, ordinal):
    return UpdateReport(chain_id=chain_id, ordinal=ordinal, status=STATUS_SUCCESS, message=MESSAGE_SUCCESS)


def test_unknown_chain_is_refused():
    with pytest.raises(UnknownChainError):
        Administrator().issue(bytes(16), SW1)


def test_retransmit_does_not_advance_cursor():
    admin, chain_id, cs = provisioned(4)
    bundle = admin.issue(chain_id, SW1)
    cursor = admin.get_chain(chain_id).cursor
    assert admin_retransmit(admin, chain_id) == bundle
    assert admin.get_chain(chain_id).cursor == cursor


def test_nack_returns_pending_and_ack_clears_it():
    admin, chain_id, cs = provisioned(4)
    bundle = admin.issue(chain_id, SW1)

    tampered = UpdateBundle(bundle.chain_id, bundle.ordinal, b"sw1!", bundle.tt)
    nack = cs.handle(tampered)
    assert not nack.success and nack.ordinal == 1
    assert admin.handle_report(chain_id, nack) == bundle

    ack = cs.handle(admin.handle_report(chain_id, nack))
    assert ack.success and ack.ordinal == 1
    assert admin.handle_report(chain_id, ack) is None
    assert chain_id not in admin.pending
    assert admin.retransmit(chain_id) is None


def test_ack_with_wrong_ordinal_is_ignored():
    admin, chain_id, _ = provisioned(4)
    admin.issue(chain_id, SW1)
    assert not admin.acknowledge(chain_id, cs_ok(chain_id, 2))
    assert chain_id in admin.pending


def test_issue_refused_while_bundle_pending():
    admin, chain_id, cs = provisioned(5)
    first = admin.issue(chain_id, SW1)
    cursor = admin.get_chain(chain_id).cursor
    with pytest.raises(PendingBundleError) as excinfo:
        admin.issue(chain_id, SW2)
    assert excinfo.value.ordinal == 1
    assert admin.get_chain(chain_id).cursor == cursor
    assert admin.retransmit(chain_id) == first
    assert cs.handle(admin.retransmit(chain_id)).success


def test_superseding_pending_bundle_strands_the_cubesat():
    admin, chain_id, cs = provisioned(5)
    admin.issue(chain_id, SW1)
    second = admin.issue(chain_id, SW2, allow_pending=True)
    resent = admin.retransmit(chain_id)
    assert resent == second and resent.ordinal == 2
    report = cs.handle(resent)
    assert not report.success and report.reason == REASON_TOKEN_MISMATCH


def test_issue_after_ack_is_allowed():
    admin, chain_id, cs = provisioned(4)
    admin_acknowledge(admin, chain_id, cs.handle(admin.issue(chain_id, SW1)))
    assert cs.handle(admin.issue(chain_id, SW2)).success


# -- Ground station ----------------------------------------------------------

def test_relay_is_identity_and_logged():
    gs = GroundStation()
    raw = os.urandom(100)
    bundle = UpdateBundle(chain_id=bytes(16), ordinal=1, payload=b"x", tt=bytes(32))
    assert gs_relay(gs, raw) is raw
    assert gs_relay(gs, bundle) is bundle
    assert len(gs.forwarding_log) == 2
    assert gs.forwarding_log[0].bundle_digest == hashlib.sha256(raw).digest()
    assert gs.forwarding_log[1].bundle_digest == hashlib.sha256(encode_bundle(bundle)).digest()


# -- CubeSat -----------------------------------------------------------------

def test_golden_first_update_sets_token_to_t2(golden_pair, golden_chain):
    admin, cs = golden_pair
    assert cs.token == T3
    report = cs.handle(admin.issue(golden_chain.chain_id, SW1))
    assert report.success
    assert report.message == MESSAGE_SUCCESS == "Update successful"
    assert cs.token == T2
    assert cs.state.installed[0].payload_digest == hashlib.sha256(b"sw1").digest()


def test_replay_after_acceptance_fails_and_keeps_token(golden_pair, golden_chain):
    admin, cs = golden_pair
    bundle = admin.issue(golden_chain.chain_id, SW1)
    assert cs.handle(bundle).success
    before = cs.storage.data

    report = cs.handle(bundle)
    assert not report.success
    assert report.message == MESSAGE_FAILED == "Error: Update Failed"
    assert report.reason == REASON_TOKEN_MISMATCH
    assert cs.token == T2
    assert cs.storage.data == before


def test_flipped_payload_byte_fails(golden_pair, golden_chain):
    admin, cs = golden_pair
    bundle = admin.issue(golden_chain.chain_id, SW1)
    data = bytearray(encode_bundle(bundle))
    data[32] ^= 0x01
    assert not cs.handle(bytes(data)).success
    assert cs.token == T3


def test_undecodable_bytes_fail_without_hashing(golden_pair):
    _, cs = golden_pair
    with counting_hashes() as counter:
        report = cs.handle(b"garbage")
    assert report.reason == REASON_DECODE_ERROR
    assert counter.count == 0


def test_tt_of_wrong_length_is_decode_error(golden_pair, golden_chain):
    _, cs = golden_pair
    for tt in (TT1[:31], TT1 + b"\x00", b""):
        with counting_hashes() as counter:
            report = cs.handle(UpdateBundle(chain_id=golden_chain.chain_id, ordinal=1, payload=b"sw1", tt=tt))
        assert report.reason == REASON_DECODE_ERROR
        assert counter.count == 0
    assert cs.token == T3


def test_bundle_file_is_verified_like_bytes(tmp_path, golden_pair, golden_chain):
    admin, cs = golden_pair
    path = tmp_path / "b1.bin"
    path.write_bytes(encode_bundle(admin.issue(golden_chain.chain_id, SW1)))

    with counting_hashes() as counter:
        report = cs.handle_file(str(path))
    assert report.success and report.ordinal == 1
    assert counter.count == 2
    assert cs.token == T2
    assert cs.state.installed[0].payload_digest == hashlib.sha256(b"sw1").digest()

    replay = cs.handle_file(str(path))
    assert replay.reason == REASON_TOKEN_MISMATCH
    assert cs.token == T2


@pytest.mark.parametrize("mangle", [
    lambda data: data[:-1],
    lambda data: data + b"\x00",
    lambda data: data[:20],
    lambda data: b"CSUMBNDX" + data[8:],
])
def test_malformed_bundle_file_costs_no_hashes(tmp_path, golden_pair, golden_chain, mangle):
    admin, cs = golden_pair
    path = tmp_path / "bad.bin"
    path.write_bytes(mangle(encode_bundle(admin.issue(golden_chain.chain_id, SW1))))
    with counting_hashes() as counter:
        report = cs.handle_file(str(path))
    assert report.reason == REASON_DECODE_ERROR
    assert counter.count == 0
    assert cs.token == T3


def test_multi_block_bundle_file(tmp_path):
    admin, chain_id, cs = provisioned(3)
    payload = os.urandom(3 * HASH_BLOCK_SIZE + 1)
    path = tmp_path / "big.bin"
    path.write_bytes(encode_bundle(admin.issue(chain_id, SoftwareUpdatePackage(payload=payload))))
    assert cs.handle_file(str(path)).success
    assert cs.state.installed[0].payload_digest == hashlib.sha256(payload).digest()


def test_unanchored_cubesat_refuses_bundle_file(tmp_path):
    path = tmp_path / "b.bin"
    path.write_bytes(b"")
    assert CubeSat().handle_file(str(path)).reason == REASON_NOT_ANCHORED


@pytest.mark.parametrize("size", [0, 1, 1024, pytest.param(2 ** 20, marks=pytest.mark.slow)])
def test_single_bit_flips_in_sup_or_tt_are_rejected(size):
    admin, chain_id, cs = provisioned(3, storage=MemoryStorage())
    anchor = cs.token
    data = encode_bundle(admin.issue(chain_id, SoftwareUpdatePackage(payload=os.urandom(size))))
    rng = random.Random(size)
    # payload and TT occupy everything after the 32-byte header
    for _ in range(1000):
        bit = rng.randrange(32 * 8, len(data) * 8)
        mutated = bytearray(data)
        mutated[bit // 8] ^= 1 << (bit % 8)
        report = cs.handle(bytes(mutated))
        assert not report.success
        assert report.reason == REASON_TOKEN_MISMATCH
    assert cs.token == anchor
    assert cs.state.accepted_count == 0
    assert cs.handle(data).success


def _valid_state_bytes(updates: int) -> bytes:
    admin, chain_id, cs = provisioned(updates + 2, storage=MemoryStorage())
    for index in range(updates):
        admin_acknowledge(admin, chain_id, cs.handle(admin.issue(chain_id, SoftwareUpdatePackage(payload=bytes([index])))))
    return cs.storage.data


def _mutate_state(rng: random.Random, data: bytes) -> bytes:
    choice = rng.randrange(4)
    if choice == 0:
        position = rng.randrange(len(data))
        mutated = bytearray(data)
        mutated[position] ^= rng.randrange(1, 256)
        return bytes(mutated)
    if choice == 1:
        return data[:rng.randrange(len(data))]
    if choice == 2:
        return data + os.urandom(rng.randrange(1, 64))
    return rng.randbytes(rng.randrange(0, 2 * len(data)))


@settings(max_examples=1000, deadline=None)
@given(data=st.binary(max_size=256))
def test_restore_of_arbitrary_bytes_never_crashes(data):
    try:
        state = cs_restore(MemoryStorage(data)).state
    except IntegrityError:
        return
    assert encode_state(state) == data


@pytest.mark.slow
def test_restore_rejects_100k_mutated_state_files():
    rng = random.Random(2024)
    originals = [_valid_state_bytes(updates) for updates in (0, 1, 3)]
    for original in originals:
        assert cs_restore(MemoryStorage(original)).state is not None
    for _ in range(100_000):
        original = rng.choice(originals)
        mutated = _mutate_state(rng, original)
        if mutated == original:
            continue
        with pytest.raises(IntegrityError):
            cs_restore(MemoryStorage(mutated))


def test_each_decision_costs_two_hashes(golden_pair, golden_chain):
    admin, cs = golden_pair
    bundle = admin.issue(golden_chain.chain_id, SW1)
    with counting_hashes() as counter:
        cs.handle(UpdateBundle(bundle.chain_id, 1, b"forged", bundle.tt))
    assert counter.count == 2
    with counting_hashes() as counter:
        cs.handle(bundle)
    assert counter.count == 2


def test_unanchored_cubesat_refuses():
    report = CubeSat().handle(b"")
    assert report.reason == REASON_NOT_ANCHORED
    assert not report.success


def test_token_after_k_updates_is_t_n_minus_k():
    seed = os.urandom(32)
    chain = build_chain(seed, 8)
    tokens = list(chain.tokens)
    admin = Administrator()
    admin.register_chain(chain)
    cs = CubeSat.provision(chain.chain_id, trust_anchor(chain))
    for k in range(1, 8):
        report = cs.handle(admin.issue(chain.chain_id, SoftwareUpdatePackage(payload=os.urandom(k))))
        admin.acknowledge(chain.chain_id, report)
        assert cs.token == tokens[8 - k - 1]
        assert cs.state.accepted_count == k


def test_out_of_order_delivery_then_in_order():
    admin, chain_id, cs = provisioned(4)
    first = admin.issue(chain_id, SW1)
    second = admin.issue(chain_id, SW2, allow_pending=True)
    assert not cs.handle(second).success
    assert cs.handle(first).success
    assert cs.handle(second).success


@pytest.mark.parametrize("order", list(itertools.permutations(range(3))))
def test_permuted_delivery_accepts_only_in_order(order):
    admin, chain_id, cs = provisioned(5)
    bundles = [admin.issue(chain_id, SoftwareUpdatePackage(payload=bytes([i])), allow_pending=True)
               for i in range(3)]
    accepted = []
    for _ in range(3):
        for index in order:
            if index not in accepted and cs.handle(bundles[index]).success:
                accepted.append(index)
    assert accepted == [0, 1, 2]


def test_retransmitted_bundle_is_accepted_once():
    admin, chain_id, cs = provisioned(3)
    admin.issue(chain_id, SW1)
    resent = admin.retransmit(chain_id)
    assert cs.handle(resent).success
    assert not cs.handle(resent).success


def test_persist_restore_round_trip(golden_pair, golden_chain):
    admin, cs = golden_pair
    cs.handle(admin.issue(golden_chain.chain_id, SW1))
    restored = cs_restore(cs.storage)
    assert restored.token == T2
    assert restored.state == cs.state


def test_fresh_restore_returns_anchor(golden_chain):
    storage = MemoryStorage()
    CubeSat.provision(golden_chain.chain_id, T3, storage=storage)
    assert cs_restore(storage).token == T3


def test_restore_truncated_state_fails(golden_pair):
    _, cs = golden_pair
    with pytest.raises(IntegrityError):
        cs_restore(MemoryStorage(cs.storage.data[:-5]))


def test_restore_corrupted_state_fails(golden_pair):
    _, cs = golden_pair
    data = bytearray(cs.storage.data)
    data[30] ^= 0x01
    with pytest.raises(IntegrityError):
        cs_restore(MemoryStorage(bytes(data)))


def test_restore_missing_state_fails(tmp_path):
    with pytest.raises(IntegrityError):
        cs_restore(FileStorage(str(tmp_path / "none.state")))


def test_state_file_layout(golden_pair, golden_chain):
    admin, cs = golden_pair
    cs.handle(admin.issue(golden_chain.chain_id, SW1))
    data = encode_state(cs.state)
    assert data[:8] == b"CSUMSAT1"
    assert data[25:57] == T2
    assert int.from_bytes(data[57:61], "big") == 1
    assert len(data) == 61 + 32 + 32


def test_cs_persist_to_file(tmp_path, golden_pair):
    _, cs = golden_pair
    path = str(tmp_path / "cubesat.state")
    cs_persist(cs, FileStorage(path))
    assert cs_restore(FileStorage(path)).token == T3


def test_failed_persist_rolls_back(golden_pair, golden_chain):
    admin, cs = golden_pair

    class FailingStorage(MemoryStorage):
        def write(self, data):
            raise OSError("disk full")

    cs.storage = FailingStorage()
    with pytest.raises(OSError):
        cs.handle(admin.issue(golden_chain.chain_id, SW1))
    assert cs.token == T3
    assert cs.state.accepted_count == 0


def test_re_anchor_resets_state(golden_pair, golden_chain):
    admin, cs = golden_pair
    cs.handle(admin.issue(golden_chain.chain_id, SW1))
    fresh = build_chain(os.urandom(32), 3)
    cs.re_anchor(fresh.chain_id, trust_anchor(fresh))
    assert cs.token == trust_anchor(fresh)
    assert cs.state.installed == []
    assert cs_restore(cs.storage).token == trust_anchor(fresh)


def test_golden_full_dry_run(golden_pair, golden_chain):
    admin, cs = golden_pair
    for sup, expected in ((SW1, T2), (SW2, T1)):
        report = cs.handle(encode_bundle(admin.issue(golden_chain.chain_id, sup)))
        assert report.success
        admin.acknowledge(golden_chain.chain_id, report)
        assert cs.token == expected
