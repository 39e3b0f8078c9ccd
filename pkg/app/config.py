"""
Configuration - Hằng số và biến môi trường

CONFIGURATION:
--------------
- CSUM_STATE_DIR: thư mục mặc định cho chain file, state file và registry
- CSUM_LOG_LEVEL: mức log (DEBUG, INFO, WARNING...)
- JSON config files: bench_config.json, scenarios/*.json
"""

import os
import logging
from typing import Optional

# Token / hash
TOKEN_SIZE = 32
CHAIN_ID_SIZE = 16
HASH_BLOCK_SIZE = 64 * 1024

# File names
DEFAULT_CHAIN_FILE = "admin.chain"
DEFAULT_STATE_FILE = "cubesat.state"
DEFAULT_REGISTRY_DB = "csum_registry.db"

# Simulator
DEFAULT_TIMEOUT_TICKS = 3
DEFAULT_MAX_EVENTS = 200_000

# Benchmark
DEFAULT_REPETITIONS = 10
DEFAULT_WARMUP = 2
MIN_REPETITIONS = 3
# Putty / Notepad++ / FileZilla / Audacity installer sizes in MB
INSTALLER_CORPUS_SIZES_MB = (1.58, 4.59, 12.22, 15.09)
INSTALLER_CORPUS_NAMES = ("putty", "notepadpp", "filezilla", "audacity")
DEFAULT_CHAIN_SIZES = (10_000, 20_000, 30_000, 40_000, 50_000)
VERIFY_HASH_RATIO_FLOOR = 5.0
LINEAR_R2_FLOOR = 0.95

STATE_DIR_ENV = "CSUM_STATE_DIR"
LOG_LEVEL_ENV = "CSUM_LOG_LEVEL"


def get_state_dir() -> str:
    """Thư mục mặc định cho các file trạng thái"""
    return os.environ.get(STATE_DIR_ENV) or os.getcwd()


def default_path(filename: str) -> str:
    """Đường dẫn mặc định trong CSUM_STATE_DIR"""
    return os.path.join(get_state_dir(), filename)


def get_log_level(override: Optional[str] = None) -> int:
    """Resolve log level from flag, then environment, then INFO"""
    name = (override or os.environ.get(LOG_LEVEL_ENV) or "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO
