#!/usr/bin/env python3
"""
CSUM - Main Entry Point
Cập nhật phần mềm an toàn cho CubeSat bằng hash chain

DEVELOPMENT DOCUMENTATION:
==========================

OVERVIEW:
---------
Command-line tool for the CSUM update protocol: an administrator issues
update bundles authenticated by one-time tokens from a hash chain, a ground
station relays them, and the CubeSat accepts each with a single hash check.

ARCHITECTURE:
-------------
- main.py: Entry point, logging setup, dispatch
- app/cli.py: argparse subcommands and exit codes
- app/hashchain.py: chain generation, token pairs, chain file format
- app/token_protocol.py: PT / TT / DT and verification
- app/wire.py: bundle wire format
- app/roles.py: Administrator, GroundStation, CubeSat
- app/simnet.py: adversarial channel simulator
- app/bench.py: primitive and hash-chain benchmarks
- app/database.py: SQLite chain registry
- app/corpus_fetcher.py: optional benchmark corpus download
- app/models.py: data models
- app/utils.py: hashing, file and validation helpers

CONFIGURATION:
--------------
- CSUM_STATE_DIR: default directory for chain/state files
- CSUM_LOG_LEVEL: log level (overridden by --log-level)
- Logs go to stderr; stdout carries command output only
"""

import sys
import logging

from app.cli import parse_args, run_command
from app.config import get_log_level


def setup_logging(level: int = logging.INFO):
    """Thiết lập logging cho ứng dụng"""
    # Clear any existing handlers to prevent duplicates
    for handler in logging.root.handlers[:]:
        logging.root.removeHandler(handler)

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stderr)
        ],
        force=True
    )

    logging.getLogger('urllib3').setLevel(logging.WARNING)


def main(argv=None) -> int:
    """Hàm main: parse arguments, thiết lập logging, chạy lệnh"""
    args = parse_args(argv)
    setup_logging(get_log_level(args.log_level))

    logger = logging.getLogger(__name__)
    logger.debug(f"Running {args.command}")
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
