"""
Wire Codec - Mã hóa / giải mã UpdateBundle giữa GS và CS

Layout (big-endian), see docs/WIRE_FORMAT.md:

    0   8   magic "CSUMBND1"
    8   16  chain_id
    24  4   ordinal (u32, 1-based, diagnostic only)
    28  4   sup_len (u32)
    32  n   payload
    32+n 32 TT

Overhead is a constant 64 bytes: 32-byte header + 32-byte TT. Bundles can be
encoded and decoded whole (bytes) or streamed (header, payload blocks, TT).
"""

import logging
import struct
from typing import BinaryIO, Optional, Tuple

from app.config import TOKEN_SIZE, CHAIN_ID_SIZE
from app.exceptions import BundleSizeError, DecodeError, InvalidLengthError
from app.models import SoftwareUpdatePackage, UpdateBundle

logger = logging.getLogger(__name__)

BUNDLE_MAGIC = b"CSUMBND1"
_HEADER = struct.Struct(">8s16sII")
HEADER_SIZE = _HEADER.size  # 32
WIRE_OVERHEAD = HEADER_SIZE + TOKEN_SIZE  # 64
MAX_PAYLOAD = 2 ** 32 - 1
MAX_ORDINAL = 2 ** 32 - 1


def _check_fields(sup_len: int, chain_id: bytes, ordinal: int, tt: bytes):
    if sup_len > MAX_PAYLOAD:
        raise BundleSizeError(f"Payload of {sup_len} bytes exceeds {MAX_PAYLOAD}")
    if len(chain_id) != CHAIN_ID_SIZE:
        raise InvalidLengthError(f"chain_id must be {CHAIN_ID_SIZE} bytes")
    if len(tt) != TOKEN_SIZE:
        raise InvalidLengthError(f"tt must be {TOKEN_SIZE} bytes")
    if not 0 <= ordinal <= MAX_ORDINAL:
        raise InvalidLengthError(f"ordinal {ordinal} out of u32 range")


def encode_bundle(bundle: UpdateBundle) -> bytes:
    """
    Serialize a bundle; total length = 64 + len(payload)

    Raises:
        BundleSizeError: payload longer than 2^32 - 1 bytes
        InvalidLengthError: chain_id / tt of the wrong size, ordinal out of range
    """
    _check_fields(len(bundle.payload), bundle.chain_id, bundle.ordinal, bundle.tt)
    header = _HEADER.pack(BUNDLE_MAGIC, bundle.chain_id, bundle.ordinal, len(bundle.payload))
    return b"".join((header, bundle.payload, bundle.tt))


def decode_bundle(data: bytes) -> UpdateBundle:
    """
    Parse a bundle. Never reads past the declared lengths.

    Raises:
        DecodeError: bad magic, truncation, or sup_len mismatch
    """
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise DecodeError(f"Expected bytes, got {type(data).__name__}")
    data = bytes(data)

    if len(data) < WIRE_OVERHEAD:
        raise DecodeError(f"Bundle truncated: {len(data)} < {WIRE_OVERHEAD} bytes")

    magic, chain_id, ordinal, sup_len = _HEADER.unpack_from(data, 0)
    if magic != BUNDLE_MAGIC:
        raise DecodeError("Bundle has bad magic")

    if len(data) != WIRE_OVERHEAD + sup_len:
        raise DecodeError(f"Bundle length {len(data)} does not match sup_len {sup_len}")

    payload = data[HEADER_SIZE:HEADER_SIZE + sup_len]
    tt = data[HEADER_SIZE + sup_len:]
    return UpdateBundle(chain_id=chain_id, ordinal=ordinal, payload=payload, tt=tt)


def read_bundle_header(reader: BinaryIO, total_size: Optional[int] = None) -> Tuple[bytes, int, int]:
    """
    Read and check the 32-byte header from an open bundle stream.

    Args:
        reader: binary stream positioned at the bundle start
        total_size: full bundle length when known (file size); checked
            against sup_len before any payload byte is read

    Returns:
        (chain_id, ordinal, sup_len); the stream is left at the payload

    Raises:
        DecodeError: truncated header, bad magic, or length mismatch
    """
    header = reader.read(HEADER_SIZE)
    if len(header) < HEADER_SIZE:
        raise DecodeError(f"Bundle truncated: {len(header)} < {HEADER_SIZE} header bytes")
    magic, chain_id, ordinal, sup_len = _HEADER.unpack(header)
    if magic != BUNDLE_MAGIC:
        raise DecodeError("Bundle has bad magic")
    if total_size is not None and total_size != WIRE_OVERHEAD + sup_len:
        raise DecodeError(f"Bundle length {total_size} does not match sup_len {sup_len}")
    return chain_id, ordinal, sup_len


def read_bundle_tt(reader: BinaryIO) -> bytes:
    """Trailing TT; the stream must end right after it"""
    tt = reader.read(TOKEN_SIZE)
    if len(tt) != TOKEN_SIZE:
        raise DecodeError(f"Bundle truncated: TT has {len(tt)} bytes")
    if reader.read(1):
        raise DecodeError("Trailing bytes after TT")
    return tt


def write_bundle(writer: BinaryIO, chain_id: bytes, ordinal: int,
                 sup: SoftwareUpdatePackage, tt: bytes) -> int:
    """
    Stream a bundle: header, SUP blocks, TT. Same bytes as encode_bundle.

    Returns:
        bytes written (64 + sup_len)

    Raises:
        BundleSizeError: SUP too large, or its size changed while copying
        InvalidLengthError: chain_id / tt of the wrong size, ordinal out of range
    """
    sup_len = sup.size
    _check_fields(sup_len, chain_id, ordinal, tt)
    writer.write(_HEADER.pack(BUNDLE_MAGIC, chain_id, ordinal, sup_len))
    copied = 0
    for chunk in sup.iter_chunks():
        writer.write(chunk)
        copied += len(chunk)
    if copied != sup_len:
        raise BundleSizeError(f"SUP changed while packaging: expected {sup_len} bytes, copied {copied}")
    writer.write(tt)
    return WIRE_OVERHEAD + sup_len
