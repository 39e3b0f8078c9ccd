"""
Hash Chain - Sinh, lưu trữ và đánh chỉ số chuỗi băm của administrator

COMPONENT OVERVIEW:
------------------
seed --h--> T_1 --h--> T_2 --h--> ... --h--> T_n = trust anchor

T_n is installed on the CubeSat before launch. Updates reveal the chain
backwards: update one carries T_{n-1}, update two T_{n-2}, ..., so a chain
of length n supports exactly n-1 updates.

CHAIN FILE FORMAT (big-endian):
------------------------------
magic "CSUMCHN1" | version (1 byte) | chain_id (16) | n (u32) | cursor (u32)
| n * 32 token bytes | SHA-256 of everything before (32)
"""

import hashlib
import logging
import secrets
import struct
from typing import Tuple, Union

from app.config import TOKEN_SIZE, CHAIN_ID_SIZE
from app.exceptions import ChainExhaustedError, IntegrityError, InvalidLengthError, SetupError
from app.models import HashChain, Seed, Token
from app.utils import atomic_write_bytes, file_checksum, sha256, token_preview

logger = logging.getLogger(__name__)

CHAIN_MAGIC = b"CSUMCHN1"
CHAIN_VERSION = 1
_HEADER = struct.Struct(">8sB16sII")
CHAIN_HEADER_SIZE = _HEADER.size  # 33


def generate_seed() -> Seed:
    """
    Draw a fresh 32-byte seed from the OS CSPRNG.

    Returned as a bytearray so the caller can wipe it after build_chain.

    Raises:
        SetupError: randomness source unavailable
    """
    try:
        seed = secrets.token_bytes(TOKEN_SIZE)
    except (OSError, NotImplementedError) as e:
        logger.error(f"Randomness source unavailable: {e}")
        raise SetupError(f"Randomness source unavailable: {e}") from e

    if not isinstance(seed, (bytes, bytearray)) or len(seed) != TOKEN_SIZE:
        raise SetupError("Randomness source returned a short read")
    return bytearray(seed)


def derive_chain_id(trust_anchor: Token) -> bytes:
    """16-byte chain identifier derived from the (public) trust anchor"""
    return hashlib.sha256(b"csum-chain-id" + trust_anchor).digest()[:CHAIN_ID_SIZE]


def build_chain(seed: Seed, n: int, wipe_seed: bool = False) -> HashChain:
    """
    Build T_1..T_n with T_1 = h(seed), T_i = h(T_{i-1}).

    Args:
        seed: 32-byte secret
        n: chain length, >= 2
        wipe_seed: overwrite a bytearray seed with zeros afterwards

    Returns:
        HashChain with cursor = n - 1

    Raises:
        InvalidLengthError: n < 2 or seed not 32 bytes
    """
    if not isinstance(n, int) or n < 2:
        raise InvalidLengthError(f"Chain length must be >= 2, got {n!r}")
    if len(seed) != TOKEN_SIZE:
        raise InvalidLengthError(f"Seed must be {TOKEN_SIZE} bytes, got {len(seed)}")

    tokens = []
    current = bytes(seed)
    for _ in range(n):
        current = sha256(current)
        tokens.append(current)

    if wipe_seed and isinstance(seed, bytearray):
        seed[:] = bytes(len(seed))

    chain = HashChain(chain_id=derive_chain_id(tokens[-1]), tokens=tokens, cursor=n - 1)
    logger.debug(f"Built chain {chain.chain_id.hex()} n={n} anchor={token_preview(tokens[-1])}")
    return chain


def trust_anchor(chain: HashChain) -> Token:
    """T_n"""
    return chain.tokens[-1]


def next_token_pair(chain: HashChain) -> Tuple[Token, Token]:
    """
    Issue the next (AT_curr, AT_prev) = (T_cursor, T_cursor+1) and decrement the cursor.

    Raises:
        ChainExhaustedError: cursor == 0
    """
    if chain.cursor < 1:
        raise ChainExhaustedError(chain.chain_id.hex())

    at_curr = chain.tokens[chain.cursor - 1]
    at_prev = chain.tokens[chain.cursor]
    chain.cursor -= 1
    return at_curr, at_prev


def peek_token_pair(chain: HashChain) -> Tuple[Token, Token]:
    """Like next_token_pair, without consuming"""
    if chain.cursor < 1:
        raise ChainExhaustedError(chain.chain_id.hex())
    return chain.tokens[chain.cursor - 1], chain.tokens[chain.cursor]


def verify_links(chain: HashChain) -> bool:
    """h(T_{i-1}) == T_i for all i in [2, n]"""
    tokens = chain.tokens
    return all(sha256(tokens[i - 1]) == tokens[i] for i in range(1, len(tokens)))


def encode_chain(chain: HashChain) -> bytes:
    """Serialize a chain in the CSUMCHN1 layout"""
    body = _HEADER.pack(CHAIN_MAGIC, CHAIN_VERSION, chain.chain_id, chain.length_n, chain.cursor)
    body += b"".join(chain.tokens)
    return body + file_checksum(body)


def decode_chain(data: bytes) -> HashChain:
    """
    Parse and validate a CSUMCHN1 chain file.

    Raises:
        IntegrityError: bad magic/version, truncation, checksum or link failure
    """
    if len(data) < CHAIN_HEADER_SIZE + TOKEN_SIZE:
        raise IntegrityError(f"Chain file truncated ({len(data)} bytes)")

    magic, version, chain_id, n, cursor = _HEADER.unpack_from(data, 0)
    if magic != CHAIN_MAGIC:
        raise IntegrityError("Chain file has bad magic")
    if version != CHAIN_VERSION:
        raise IntegrityError(f"Unsupported chain file version {version}")

    expected = CHAIN_HEADER_SIZE + n * TOKEN_SIZE + TOKEN_SIZE
    if len(data) != expected:
        raise IntegrityError(f"Chain file length {len(data)} != expected {expected}")

    body, checksum = data[:-TOKEN_SIZE], data[-TOKEN_SIZE:]
    if file_checksum(body) != checksum:
        raise IntegrityError("Chain file checksum mismatch")
    if n < 2 or cursor > n - 1:
        raise IntegrityError(f"Chain header out of range: n={n} cursor={cursor}")

    tokens = [body[offset:offset + TOKEN_SIZE]
              for offset in range(CHAIN_HEADER_SIZE, CHAIN_HEADER_SIZE + n * TOKEN_SIZE, TOKEN_SIZE)]
    chain = HashChain(chain_id=chain_id, tokens=tokens, cursor=cursor)
    if not verify_links(chain):
        raise IntegrityError("Chain link check failed: h(T_{i-1}) != T_i")
    return chain


def save_chain(chain: HashChain, destination: Union[str, "object"]):
    """
    Persist a chain to a path (atomic replace) or a writable binary file object.
    """
    data = encode_chain(chain)
    if isinstance(destination, str):
        atomic_write_bytes(destination, data)
        logger.info(f"Saved chain {chain.chain_id.hex()} to {destination} (cursor={chain.cursor})")
    else:
        destination.write(data)


def load_chain(source: Union[str, "object"]) -> HashChain:
    """
    Load a chain from a path or readable binary file object.

    Raises:
        IntegrityError: corrupted or truncated file
    """
    if isinstance(source, str):
        with open(source, "rb") as f:
            data = f.read()
    else:
        data = source.read()
    return decode_chain(data)
