"""
Utility Functions - Các hàm tiện ích cho ứng dụng

Hashing (SHA-256 with invocation accounting), XOR, hex helpers,
crash-safe file replacement, exclusive file locks and JSON/CSV helpers.
"""

import os
import sys
import json
import hashlib
import logging
import tempfile
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Any, BinaryIO, Dict, Iterator, List, Optional, Tuple

import pandas as pd

from app.config import TOKEN_SIZE, HASH_BLOCK_SIZE
from app.exceptions import ConfigurationError, InvalidLengthError, StateLockedError

logger = logging.getLogger(__name__)


class HashCounter:
    """Đếm số lần gọi hàm băm của giao thức"""

    def __init__(self, parent: Optional["HashCounter"] = None):
        self.count = 0
        self.parent = parent

    def increment(self):
        counter = self
        while counter is not None:
            counter.count += 1
            counter = counter.parent


_active_counter: ContextVar[Optional[HashCounter]] = ContextVar("csum_hash_counter", default=None)


@contextmanager
def counting_hashes() -> Iterator[HashCounter]:
    """
    Count protocol hash invocations made inside the block.

    Counters nest: an inner block's invocations are also added to every
    enclosing counter.

    Returns:
        HashCounter whose `count` is read after (or during) the block
    """
    counter = HashCounter(parent=_active_counter.get())
    reset_token = _active_counter.set(counter)
    try:
        yield counter
    finally:
        _active_counter.reset(reset_token)


def new_hash(data: bytes = b""):
    """
    Start one protocol hash invocation (SHA-256).

    A single invocation may be fed many blocks with update(); it counts once.
    """
    counter = _active_counter.get()
    if counter is not None:
        counter.increment()
    return hashlib.sha256(data)


def sha256(data: bytes) -> bytes:
    """One-shot protocol hash h(data)"""
    return new_hash(data).digest()


def file_checksum(data: bytes) -> bytes:
    """
    SHA-256 trailer for chain/state files.

    Storage integrity, not protocol work: not counted.
    """
    return hashlib.sha256(data).digest()


def iter_blocks(data: bytes, block_size: int = HASH_BLOCK_SIZE) -> Iterator[memoryview]:
    """Chia dữ liệu thành các block cố định (không copy)"""
    view = memoryview(data)
    for offset in range(0, len(view), block_size):
        yield view[offset:offset + block_size]


def xor_bytes(left: bytes, right: bytes) -> bytes:
    """
    Bytewise XOR of two equal-length values

    Raises:
        InvalidLengthError: if the lengths differ
    """
    if len(left) != len(right):
        raise InvalidLengthError(f"XOR operands differ in length: {len(left)} != {len(right)}")
    value = int.from_bytes(left, "big") ^ int.from_bytes(right, "big")
    return value.to_bytes(len(left), "big")


def token_preview(token: bytes, length: int = 8) -> str:
    """Short hex preview used in logs"""
    if not token:
        return "N/A"
    return token.hex()[:length] + "..."


def validate_token_hex(value: str) -> Tuple[bool, str]:
    """
    Validate a hex-encoded token (trust anchor)

    Args:
        value: hex string

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not value:
        return False, "Token must not be empty"

    value = value.strip()
    if len(value) != TOKEN_SIZE * 2:
        return False, f"Token must be {TOKEN_SIZE * 2} hex characters, got {len(value)}"

    try:
        bytes.fromhex(value)
    except ValueError:
        return False, "Token contains non-hex characters"

    return True, ""


def validate_chain_length(length: Any) -> Tuple[bool, str]:
    """
    Validate a requested chain length

    Returns:
        Tuple of (is_valid, error_message)
    """
    try:
        n = int(length)
    except (ValueError, TypeError):
        return False, f"Chain length must be an integer, got {length!r}"

    if n < 2:
        return False, "Chain length must be at least 2 (one update)"

    return True, ""


def ensure_directory(directory: str) -> bool:
    """
    Ensure directory exists, create if not

    Returns:
        Success status
    """
    if not directory:
        return True
    try:
        os.makedirs(directory, exist_ok=True)
        return True
    except OSError:
        return False


@contextmanager
def atomic_writer(path: str) -> Iterator[BinaryIO]:
    """
    Binary file handle whose content replaces `path` when the block exits
    cleanly (write-to-temp-then-rename).

    A crash at any point leaves either the old or the new file, never a mix.
    """
    directory = os.path.dirname(os.path.abspath(path))
    ensure_directory(directory)

    fd, tmp_path = tempfile.mkstemp(prefix=".csum-", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "wb") as tmp:
            yield tmp
            tmp.flush()
            os.fsync(tmp.fileno())
        os.replace(tmp_path, path)
    except BaseException:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise


def atomic_write_bytes(path: str, data: bytes):
    """Replace `path` with `data` atomically"""
    with atomic_writer(path) as f:
        f.write(data)


def iter_file_blocks(f: BinaryIO, length: Optional[int] = None,
                     block_size: int = HASH_BLOCK_SIZE) -> Iterator[bytes]:
    """
    Read a binary stream in fixed-size chunks.

    Args:
        f: open binary file
        length: stop after exactly this many bytes (default: read to EOF)

    Raises:
        EOFError: the stream ended before `length` bytes
    """
    remaining = length
    while remaining is None or remaining > 0:
        size = block_size if remaining is None else min(block_size, remaining)
        chunk = f.read(size)
        if not chunk:
            if remaining:
                raise EOFError(f"stream ended {remaining} bytes early")
            return
        if remaining is not None:
            remaining -= len(chunk)
        yield chunk


@contextmanager
def exclusive_lock(path: str):
    """
    Non-blocking exclusive lock on `<path>.lock`

    Raises:
        StateLockedError: if another process holds the lock
    """
    lock_path = path + ".lock"
    ensure_directory(os.path.dirname(os.path.abspath(lock_path)))
    handle = open(lock_path, "a+b")
    try:
        try:
            if sys.platform.startswith("win"):
                import msvcrt
                msvcrt.locking(handle.fileno(), msvcrt.LK_NBLCK, 1)
            else:
                import fcntl
                fcntl.flock(handle.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as e:
            raise StateLockedError(f"{path} is locked by another process") from e

        yield

        if sys.platform.startswith("win"):
            import msvcrt
            handle.seek(0)
            msvcrt.locking(handle.fileno(), msvcrt.LK_UNLCK, 1)
    finally:
        handle.close()


def load_json_config(file_path: str) -> Dict[str, Any]:
    """
    Load JSON configuration file

    Args:
        file_path: Path to JSON file

    Returns:
        Configuration dictionary

    Raises:
        ConfigurationError: missing file, bad JSON, or a non-object top level
    """
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"Config file not found: {file_path}") from e
    except json.JSONDecodeError as e:
        logger.error(f"Error loading JSON config {file_path}: {str(e)}")
        raise ConfigurationError(f"Invalid JSON in {file_path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigurationError(f"{file_path}: top level must be a JSON object")
    return data


def save_json_config(data: Dict[str, Any], file_path: str) -> bool:
    """
    Save configuration/summary to JSON file

    Returns:
        Success status
    """
    try:
        atomic_write_bytes(file_path, json.dumps(data, indent=2, ensure_ascii=False).encode("utf-8"))
        return True
    except (OSError, IOError) as e:
        logger.error(f"Error saving JSON file: {str(e)}")
        return False


def get_file_size_mb(file_path: str) -> float:
    """
    Get file size in MB

    Returns:
        File size in MB, 0.0 if unreadable
    """
    try:
        size_bytes = os.path.getsize(file_path)
        return size_bytes / (1000 * 1000)
    except (OSError, IOError):
        return 0.0


def export_to_csv(data: List[Dict[str, Any]], filename: str, headers: Optional[List[str]] = None) -> bool:
    """
    Export rows to a CSV file

    Args:
        data: List of dictionaries to export
        filename: Output filename
        headers: Optional column order (default: union of row keys, first-seen order)

    Returns:
        Success status
    """
    try:
        if not data:
            return False
        frame = pd.DataFrame(data, columns=headers)
        ensure_directory(os.path.dirname(filename))
        frame.to_csv(filename, index=False)
        return True
    except (OSError, ValueError) as e:
        logger.error(f"Error exporting to CSV: {str(e)}")
        return False
