"""
Tests cho CLI (chạy main.py như một tiến trình riêng)
"""

import json
import os
import subprocess
import sys

import pytest

from app.cli import EXIT_OK, EXIT_REJECTED, EXIT_USAGE

from tests.conftest import ROOT, SCENARIO_DIR


@pytest.fixture
def csum(main_script, tmp_path):
    env = dict(os.environ, CSUM_STATE_DIR=str(tmp_path / "state"), CSUM_LOG_LEVEL="WARNING")

    def run(*args):
        return subprocess.run([sys.executable, main_script, *args], cwd=ROOT, env=env,
                              capture_output=True, text=True, timeout=300)
    return run


@pytest.fixture
def sup_files(tmp_path):
    paths = []
    for name in ("sw1", "sw2"):
        path = tmp_path / f"{name}.bin"
        path.write_bytes(name.encode())
        paths.append(str(path))
    return paths


def init_chain(csum, tmp_path, length=3):
    chain = str(tmp_path / "admin.chain")
    result = csum("admin-init", "--length", str(length), "--out", chain)
    assert result.returncode == EXIT_OK, result.stderr
    anchor, chain_id_line = result.stdout.splitlines()[:2]
    return chain, anchor, chain_id_line.split(": ")[1]


def test_admin_init_writes_chain_file(csum, tmp_path):
    chain, anchor, chain_id = init_chain(csum, tmp_path)
    assert os.path.getsize(chain) == 33 + 3 * 32 + 32
    assert len(bytes.fromhex(anchor)) == 32
    assert len(bytes.fromhex(chain_id)) == 16


def test_admin_init_rejects_length_one(csum, tmp_path):
    result = csum("admin-init", "--length", "1", "--out", str(tmp_path / "x.chain"))
    assert result.returncode == EXIT_USAGE
    assert "Error:" in result.stderr


def test_package_until_exhausted(csum, tmp_path, sup_files):
    chain, _, _ = init_chain(csum, tmp_path)
    for index, sup in enumerate(sup_files, start=1):
        out = str(tmp_path / f"b{index}.bin")
        result = csum("admin-package", "--chain", chain, "--sup", sup, "--out", out)
        assert result.returncode == EXIT_OK, result.stderr
        assert f"Bundle #{index}" in result.stdout
        assert os.path.getsize(out) == 3 + 64

    result = csum("admin-package", "--chain", chain, "--sup", sup_files[0], "--out", str(tmp_path / "b3.bin"))
    assert result.returncode == EXIT_USAGE
    assert not os.path.exists(tmp_path / "b3.bin")


def test_end_to_end_apply_replay_and_tamper(csum, tmp_path, sup_files):
    chain, anchor, _ = init_chain(csum, tmp_path)
    state = str(tmp_path / "cubesat.state")
    assert csum("cs-init", "--state", state, "--anchor", anchor).returncode == EXIT_OK

    bundle = str(tmp_path / "b1.bin")
    csum("admin-package", "--chain", chain, "--sup", sup_files[0], "--out", bundle)

    tampered = tmp_path / "b1_tampered.bin"
    data = bytearray(open(bundle, "rb").read())
    data[32] ^= 0x01
    tampered.write_bytes(bytes(data))

    result = csum("cs-apply", "--state", state, "--bundle", str(tampered))
    assert result.returncode == EXIT_REJECTED
    assert result.stdout.strip() == "Error: Update Failed"

    result = csum("cs-apply", "--state", state, "--bundle", bundle)
    assert result.returncode == EXIT_OK
    assert result.stdout.strip() == "Update successful"

    result = csum("cs-apply", "--state", state, "--bundle", bundle)
    assert result.returncode == EXIT_REJECTED
    assert result.stdout.strip() == "Error: Update Failed"

    second = str(tmp_path / "b2.bin")
    csum("admin-package", "--chain", chain, "--sup", sup_files[1], "--out", second)
    assert csum("cs-apply", "--state", state, "--bundle", second).returncode == EXIT_OK


def test_multi_block_sup_is_packaged_and_applied(csum, tmp_path):
    chain, anchor, _ = init_chain(csum, tmp_path)
    state = str(tmp_path / "cubesat.state")
    csum("cs-init", "--state", state, "--anchor", anchor)

    payload = os.urandom(5 * 64 * 1024 + 123)
    sup = tmp_path / "firmware.bin"
    sup.write_bytes(payload)
    bundle = tmp_path / "b1.bin"
    result = csum("admin-package", "--chain", chain, "--sup", str(sup), "--out", str(bundle))
    assert result.returncode == EXIT_OK, result.stderr
    assert f"({len(payload) + 64} bytes)" in result.stdout

    data = bundle.read_bytes()
    assert data[32:-32] == payload
    assert int.from_bytes(data[28:32], "big") == len(payload)
    assert csum("cs-apply", "--state", state, "--bundle", str(bundle)).returncode == EXIT_OK


def test_cs_init_refuses_existing_state_without_force(csum, tmp_path):
    _, anchor, _ = init_chain(csum, tmp_path)
    state = str(tmp_path / "cubesat.state")
    assert csum("cs-init", "--state", state, "--anchor", anchor).returncode == EXIT_OK
    assert csum("cs-init", "--state", state, "--anchor", anchor).returncode == EXIT_USAGE
    assert csum("cs-init", "--state", state, "--anchor", anchor, "--force").returncode == EXIT_OK


def test_cs_init_rejects_bad_anchor(csum, tmp_path):
    result = csum("cs-init", "--state", str(tmp_path / "s.state"), "--anchor", "abcd")
    assert result.returncode == EXIT_USAGE


def test_corrupt_state_file_is_usage_error(csum, tmp_path, sup_files):
    chain, anchor, _ = init_chain(csum, tmp_path)
    state = tmp_path / "cubesat.state"
    csum("cs-init", "--state", str(state), "--anchor", anchor)
    bundle = str(tmp_path / "b1.bin")
    csum("admin-package", "--chain", chain, "--sup", sup_files[0], "--out", bundle)

    state.write_bytes(state.read_bytes()[:-3])
    result = csum("cs-apply", "--state", str(state), "--bundle", bundle)
    assert result.returncode == EXIT_USAGE
    assert "Error:" in result.stderr


def test_registry_issue_and_retransmit(csum, tmp_path, sup_files):
    registry = str(tmp_path / "registry.db")
    result = csum("admin-init", "--length", "3", "--registry", registry)
    assert result.returncode == EXIT_OK, result.stderr
    anchor = result.stdout.splitlines()[0]
    chain_id = result.stdout.splitlines()[1].split(": ")[1]

    state = str(tmp_path / "cubesat.state")
    csum("cs-init", "--state", state, "--anchor", anchor, "--chain-id", chain_id)

    first = str(tmp_path / "b1.bin")
    resent = str(tmp_path / "b1_again.bin")
    assert csum("admin-package", "--registry", registry, "--chain-id", chain_id,
                "--sup", sup_files[0], "--out", first).returncode == EXIT_OK
    assert csum("admin-package", "--registry", registry, "--chain-id", chain_id,
                "--retransmit", "--out", resent).returncode == EXIT_OK
    assert open(first, "rb").read() == open(resent, "rb").read()

    assert csum("cs-apply", "--state", state, "--bundle", resent).returncode == EXIT_OK


def test_registry_refuses_issue_until_acknowledged(csum, tmp_path, sup_files):
    registry = str(tmp_path / "registry.db")
    result = csum("admin-init", "--length", "4", "--registry", registry)
    anchor = result.stdout.splitlines()[0]
    chain_id = result.stdout.splitlines()[1].split(": ")[1]
    state = str(tmp_path / "cubesat.state")
    csum("cs-init", "--state", state, "--anchor", anchor, "--chain-id", chain_id)

    first, second = str(tmp_path / "b1.bin"), str(tmp_path / "b2.bin")
    package = ("admin-package", "--registry", registry, "--chain-id", chain_id)
    assert csum(*package, "--sup", sup_files[0], "--out", first).returncode == EXIT_OK

    refused = csum(*package, "--sup", sup_files[1], "--out", second)
    assert refused.returncode == EXIT_USAGE
    assert "not acknowledged" in refused.stderr
    assert not os.path.exists(second)

    status = csum("admin-status", "--registry", registry, "--chain-id", chain_id)
    assert status.returncode == EXIT_OK
    assert "1 issued, 2 remaining" in status.stdout
    assert "pending: #1" in status.stdout

    assert csum("cs-apply", "--state", state, "--bundle", first).returncode == EXIT_OK
    wrong = csum("admin-ack", "--registry", registry, "--chain-id", chain_id, "--ordinal", "2")
    assert wrong.returncode == EXIT_REJECTED
    ack = csum("admin-ack", "--registry", registry, "--chain-id", chain_id, "--ordinal", "1")
    assert ack.returncode == EXIT_OK, ack.stderr
    assert "pending: none" in csum("admin-status", "--registry", registry, "--chain-id", chain_id).stdout

    assert csum(*package, "--sup", sup_files[1], "--out", second).returncode == EXIT_OK
    assert csum("cs-apply", "--state", state, "--bundle", second).returncode == EXIT_OK

    summary = csum("admin-status", "--registry", registry)
    assert summary.stdout.strip() == "1 chains, 1 updates remaining, 0 exhausted, 1 pending"


def test_admin_ack_without_pending_bundle(csum, tmp_path):
    registry = str(tmp_path / "registry.db")
    result = csum("admin-init", "--length", "3", "--registry", registry)
    chain_id = result.stdout.splitlines()[1].split(": ")[1]
    ack = csum("admin-ack", "--registry", registry, "--chain-id", chain_id, "--ordinal", "1")
    assert ack.returncode == EXIT_USAGE
    assert "No pending bundle" in ack.stderr


def test_admin_status_needs_existing_registry(csum, tmp_path):
    result = csum("admin-status", "--registry", str(tmp_path / "missing.db"))
    assert result.returncode == EXIT_USAGE
    assert not os.path.exists(tmp_path / "missing.db")



def test_retransmit_needs_registry(csum, tmp_path):
    chain, _, _ = init_chain(csum, tmp_path)
    result = csum("admin-package", "--chain", chain, "--retransmit", "--out", str(tmp_path / "b.bin"))
    assert result.returncode == EXIT_USAGE


def test_sim_run_replay_scenario(csum, tmp_path):
    result = csum("sim-run", "--scenario", os.path.join(SCENARIO_DIR, "replay.json"))
    assert result.returncode == EXIT_OK, result.stdout + result.stderr
    assert "0 forgeries accepted" in result.stdout
    assert "FAIL" not in result.stdout


def test_sim_run_transcripts_are_reproducible(csum, tmp_path):
    scenario = os.path.join(SCENARIO_DIR, "stochastic.json")
    first, second = str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")
    assert csum("sim-run", "--scenario", scenario, "--seed", "7", "--transcript", first).returncode in (
        EXIT_OK, EXIT_REJECTED)
    csum("sim-run", "--scenario", scenario, "--seed", "7", "--transcript", second)
    with open(first, "rb") as a, open(second, "rb") as b:
        assert a.read() == b.read()
    with open(first) as f:
        lines = f.read().splitlines()
    assert json.loads(lines[-1])["kind"] == "end"


def test_sim_run_failed_expectation_exits_one(csum, tmp_path):
    path = tmp_path / "wrong.json"
    path.write_text(json.dumps({"name": "wrong", "chain_length": 3, "updates": ["sw1"],
                                "expect": {"accepted": 2}}))
    result = csum("sim-run", "--scenario", str(path))
    assert result.returncode == EXIT_REJECTED
    assert "FAIL accepted" in result.stdout


def test_sim_run_malformed_scenario(csum, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"chain_length": 1}))
    assert csum("sim-run", "--scenario", str(path)).returncode == EXIT_USAGE

    path.write_text("{not json")
    assert csum("sim-run", "--scenario", str(path)).returncode == EXIT_USAGE


def test_bench_run_writes_csv_and_summary(csum, tmp_path):
    config = tmp_path / "bench.json"
    config.write_text(json.dumps({"corpus": [{"name": "tiny", "size_mb": 0.01}],
                                  "primitives": ["hash", "sign"], "repetitions": 3, "warmup": 0,
                                  "chain_sizes": [20, 40]}))
    out, summary = str(tmp_path / "bench.csv"), str(tmp_path / "summary.json")
    result = csum("bench-run", "--config", str(config), "--out", out, "--summary", summary)
    assert result.returncode == EXIT_OK, result.stderr
    with open(out) as f:
        assert len(f.read().splitlines()) == 1 + 2 * 3 + 2
    with open(summary) as f:
        assert "claims" in json.load(f)


def test_missing_subcommand_is_usage_error(csum):
    assert csum().returncode == EXIT_USAGE
