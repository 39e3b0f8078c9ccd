"""
CLI - Giao diện dòng lệnh cho administrator, CubeSat, simulator và benchmark

COMMANDS:
--------
admin-init     build a chain, write the chain file (and/or registry), print the trust anchor
admin-package  issue the next bundle from a chain file or registry entry
admin-ack      clear the pending bundle of a registry chain once the CubeSat reported success
admin-status   registry summary, or cursor and pending bundle of one chain
cs-init        install a trust anchor into a CubeSat state file (--force re-anchors)
cs-apply       verify and install one bundle; prints the CS report message
sim-run        run a channel scenario and check its assertions
bench-run      run the primitive and chain benchmarks, write CSV

EXIT CODES:
----------
0 success, 1 protocol rejection or failed assertion, 2 usage/configuration error
"""

import os
import sys
import argparse
import logging
from typing import Callable, Dict, Optional

from app.bench import load_bench_config, run_bench
from app.config import DEFAULT_CHAIN_FILE, DEFAULT_REGISTRY_DB, DEFAULT_STATE_FILE, default_path
from app.database import DatabaseManager
from app.exceptions import ConfigurationError, CsumError, UnknownChainError
from app.hashchain import derive_chain_id, load_chain, save_chain, build_chain, generate_seed, trust_anchor
from app.models import MESSAGE_SUCCESS, STATUS_SUCCESS, SoftwareUpdatePackage, UpdateReport
from app.roles import Administrator, CubeSat
from app.simnet import check_expectations, load_scenario, run_scenario, transcript_to_jsonl
from app.storage import FileStorage
from app.utils import (
    atomic_write_bytes, atomic_writer, exclusive_lock, save_json_config,
    validate_chain_length, validate_token_hex,
)
from app.wire import WIRE_OVERHEAD, encode_bundle, write_bundle

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_USAGE = 2

logger = logging.getLogger(__name__)


class UsageError(CsumError):
    """Invalid flag combination detected after argument parsing"""


def _u64(value: str) -> int:
    try:
        number = int(value, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if not 0 <= number < 2 ** 64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return number


def _chain_id(value: str) -> bytes:
    try:
        chain_id = bytes.fromhex(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"chain id must be hex: {value!r}") from None
    if len(chain_id) != 16:
        raise argparse.ArgumentTypeError("chain id must be 32 hex characters")
    return chain_id


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csum", description="Secure CubeSat software updates")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default: $CSUM_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("admin-init", help="Provision a new hash chain")
    p.add_argument("--length", required=True, help="chain length n (supports n - 1 updates)")
    p.add_argument("--out", default=None, help=f"chain file (default: $CSUM_STATE_DIR/{DEFAULT_CHAIN_FILE})")
    p.add_argument("--registry", default=None, help="also register the chain in this SQLite registry")

    p = sub.add_parser("admin-package", help="Issue the next update bundle")
    p.add_argument("--chain", default=None, help="chain file")
    p.add_argument("--registry", default=None, help=f"registry database (e.g. {DEFAULT_REGISTRY_DB})")
    p.add_argument("--chain-id", type=_chain_id, default=None, help="chain id in the registry")
    p.add_argument("--sup", default=None, help="software update payload file")
    p.add_argument("--out", required=True, help="bundle output file")
    p.add_argument("--retransmit", action="store_true", help="re-emit the pending bundle (registry only)")

    p = sub.add_parser("admin-ack", help="Acknowledge the pending bundle of a registry chain")
    p.add_argument("--registry", required=True, help="registry database")
    p.add_argument("--chain-id", type=_chain_id, required=True, help="chain id in the registry")
    p.add_argument("--ordinal", type=int, required=True, help="ordinal the CubeSat reported as installed")

    p = sub.add_parser("admin-status", help="Show registry status")
    p.add_argument("--registry", required=True, help="registry database")
    p.add_argument("--chain-id", type=_chain_id, default=None, help="show one chain")

    p = sub.add_parser("cs-init", help="Install a trust anchor on the CubeSat")
    p.add_argument("--state", default=None, help=f"state file (default: $CSUM_STATE_DIR/{DEFAULT_STATE_FILE})")
    p.add_argument("--anchor", required=True, help="trust anchor, 64 hex characters")
    p.add_argument("--chain-id", type=_chain_id, default=None, help="chain id (default: derived from the anchor)")
    p.add_argument("--force", action="store_true", help="overwrite existing state (re-anchor)")

    p = sub.add_parser("cs-apply", help="Verify and install a bundle")
    p.add_argument("--state", default=None, help=f"state file (default: $CSUM_STATE_DIR/{DEFAULT_STATE_FILE})")
    p.add_argument("--bundle", required=True, help="bundle file")

    p = sub.add_parser("sim-run", help="Run an adversarial channel scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--seed", type=_u64, default=None, help="override the scenario rng_seed")
    p.add_argument("--transcript", default=None, help="write the JSON-lines transcript here ('-' for stdout)")

    p = sub.add_parser("bench-run", help="Run benchmarks")
    p.add_argument("--config", required=True, help="benchmark config JSON")
    p.add_argument("--out", default="bench_results.csv", help="CSV report path")
    p.add_argument("--summary", default=None, help="machine-readable JSON summary path")

    return parser


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------

def _open_registry(path: str) -> DatabaseManager:
    db = DatabaseManager(path)
    db.init_database()
    return db


def cmd_admin_init(args) -> int:
    is_valid, error = validate_chain_length(args.length)
    if not is_valid:
        raise UsageError(error)
    n = int(args.length)

    out = args.out or (None if args.registry else default_path(DEFAULT_CHAIN_FILE))
    chain = build_chain(generate_seed(), n, wipe_seed=True)

    if out:
        with exclusive_lock(out):
            save_chain(chain, out)
    if args.registry:
        admin = Administrator(_open_registry(args.registry))
        admin.register_chain(chain)

    print(trust_anchor(chain).hex())
    print(f"chain_id: {chain.chain_id.hex()}")
    return EXIT_OK


def _load_sup(args) -> SoftwareUpdatePackage:
    if not args.sup:
        raise UsageError("--sup is required")
    if not os.path.isfile(args.sup):
        raise UsageError(f"SUP file not found: {args.sup}")
    return SoftwareUpdatePackage.from_file(args.sup)


def cmd_admin_package(args) -> int:
    if args.registry:
        if args.chain_id is None:
            raise UsageError("--registry requires --chain-id")
        with exclusive_lock(args.registry):
            admin = Administrator(_open_registry(args.registry))
            if args.retransmit:
                bundle = admin.retransmit(args.chain_id)
                if bundle is None:
                    raise UsageError(f"No pending bundle for chain {args.chain_id.hex()}")
            else:
                bundle = admin.issue(args.chain_id, _load_sup(args))
            atomic_write_bytes(args.out, encode_bundle(bundle))
        ordinal, written = bundle.ordinal, bundle.sup_len + WIRE_OVERHEAD
    else:
        if args.retransmit:
            raise UsageError("--retransmit requires --registry")
        if not args.chain:
            raise UsageError("either --chain or --registry/--chain-id is required")
        if not os.path.isfile(args.chain):
            raise UsageError(f"Chain file not found: {args.chain}")
        sup = _load_sup(args)
        with exclusive_lock(args.chain):
            admin = Administrator()
            chain = load_chain(args.chain)
            admin.register_chain(chain)
            ordinal, tt = admin.advance(chain.chain_id, sup)
            # cursor first: a token pair must never be issued twice
            save_chain(chain, args.chain)
            with atomic_writer(args.out) as out:
                written = write_bundle(out, chain.chain_id, ordinal, sup, tt)

    print(f"Bundle #{ordinal} written to {args.out} ({written} bytes)")
    return EXIT_OK


def _existing_registry(path: str) -> DatabaseManager:
    if not os.path.isfile(path):
        raise UsageError(f"Registry not found: {path}")
    return _open_registry(path)


def cmd_admin_ack(args) -> int:
    with exclusive_lock(args.registry):
        admin = Administrator(_existing_registry(args.registry))
        admin.get_chain(args.chain_id)
        pending = admin.pending.get(args.chain_id)
        if pending is None:
            raise UsageError(f"No pending bundle for chain {args.chain_id.hex()}")
        report = UpdateReport(chain_id=args.chain_id, ordinal=args.ordinal,
                              status=STATUS_SUCCESS, message=MESSAGE_SUCCESS)
        if not admin.acknowledge(args.chain_id, report):
            print(f"Pending bundle is #{pending.ordinal}, not #{args.ordinal}; nothing acknowledged")
            return EXIT_REJECTED

    print(f"Update #{args.ordinal} acknowledged on chain {args.chain_id.hex()}")
    return EXIT_OK


def cmd_admin_status(args) -> int:
    db = _existing_registry(args.registry)
    if args.chain_id is None:
        stats = db.get_registry_stats()
        print(f"{stats['chains']} chains, {stats['updates_remaining']} updates remaining, "
              f"{stats['exhausted']} exhausted, {stats['pending']} pending")
        return EXIT_OK

    chain = db.get_chain(args.chain_id)
    if chain is None:
        raise UnknownChainError(f"Unknown chain_id {args.chain_id.hex()}")
    pending = db.get_pending(args.chain_id)
    print(f"chain {chain.chain_id.hex()}: n={chain.length_n}, {chain.issued} issued, {chain.remaining} remaining")
    print(f"pending: #{pending.ordinal} ({pending.sup_len} bytes)" if pending else "pending: none")
    return EXIT_OK


def _state_path(args) -> str:
    return args.state or default_path(DEFAULT_STATE_FILE)


def cmd_cs_init(args) -> int:
    is_valid, error = validate_token_hex(args.anchor)
    if not is_valid:
        raise UsageError(error)
    anchor = bytes.fromhex(args.anchor.strip())
    chain_id = args.chain_id or derive_chain_id(anchor)

    path = _state_path(args)
    with exclusive_lock(path):
        storage = FileStorage(path)
        if storage.exists() and not args.force:
            raise UsageError(f"{path} already holds a CubeSat state; use --force to re-anchor")
        CubeSat.provision(chain_id, anchor, storage=storage)

    print(f"CubeSat anchored to chain {chain_id.hex()}")
    return EXIT_OK


def cmd_cs_apply(args) -> int:
    if not os.path.isfile(args.bundle):
        raise UsageError(f"Bundle file not found: {args.bundle}")
    path = _state_path(args)
    with exclusive_lock(path):
        cs = CubeSat.restore(FileStorage(path))
        report = cs.handle_file(args.bundle)

    print(report.message)
    logger.info(f"Report: {report.to_dict()}")
    return EXIT_OK if report.success else EXIT_REJECTED


def cmd_sim_run(args) -> int:
    scenario = load_scenario(args.scenario, rng_seed=args.seed)
    transcript = run_scenario(scenario)
    results = check_expectations(scenario, transcript)

    if args.transcript == "-":
        sys.stdout.write(transcript_to_jsonl(transcript))
    elif args.transcript:
        atomic_write_bytes(args.transcript, transcript_to_jsonl(transcript).encode("utf-8"))

    print(f"Scenario {scenario.name} (seed {scenario.rng_seed}): "
          f"{transcript.accepted} accepted, {transcript.rejected} rejected, "
          f"{transcript.adversarial_actions} adversarial actions")
    print(f"{transcript.forgeries_accepted} forgeries accepted")
    for result in results:
        status = "PASS" if result['passed'] else "FAIL"
        print(f"{status} {result['name']}: expected {result['expected']!r}, got {result['actual']!r}")

    return EXIT_OK if all(result['passed'] for result in results) else EXIT_REJECTED


def cmd_bench_run(args) -> int:
    cfg = load_bench_config(args.config)
    report = run_bench(cfg)

    if not report.to_csv(args.out):
        raise ConfigurationError(f"Could not write CSV report to {args.out}")
    if args.summary and not save_json_config(report.summary_dict(), args.summary):
        raise ConfigurationError(f"Could not write summary to {args.summary}")

    print(report.format_summary())
    print(f"CSV report: {args.out}")
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "admin-init": cmd_admin_init,
    "admin-package": cmd_admin_package,
    "admin-ack": cmd_admin_ack,
    "admin-status": cmd_admin_status,
    "cs-init": cmd_cs_init,
    "cs-apply": cmd_cs_apply,
    "sim-run": cmd_sim_run,
    "bench-run": cmd_bench_run,
}


def run_command(args) -> int:
    """Dispatch a parsed command and map errors to exit codes"""
    try:
        return COMMANDS[args.command](args)
    except CsumError as e:
        logger.debug(f"{args.command} failed", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE


def parse_args(argv: Optional[list] = None):
    return build_parser().parse_args(argv)
