"""
Token Protocol - Sinh Transmission Token (administrator) và trích xuất / xác thực token (CubeSat)

    PT = h(SUP || AT_prev)           partial token, payload bytes then 32 token bytes
    TT = AT_curr XOR PT              administrator
    DT = TT XOR h(SUP_rec || token)  CubeSat
    accept  <=>  h(DT) == token      one hash invocation

All functions are pure and thread-safe. Payloads are hashed block by block,
from memory, from the SUP file or from an open bundle stream.
"""

import hmac
import logging
from typing import BinaryIO, Tuple, Union

from app.exceptions import DecodeError, InvalidTokenPairError
from app.models import (
    SoftwareUpdatePackage, VerificationOutcome, PartialToken, Token, TransmissionToken,
    REASON_OK, REASON_TOKEN_MISMATCH, require_token,
)
from app.utils import iter_blocks, iter_file_blocks, new_hash, sha256, xor_bytes

logger = logging.getLogger(__name__)

SupLike = Union[SoftwareUpdatePackage, bytes, bytearray, memoryview]


def _stream_payload(sup: SupLike):
    """One protocol hash invocation fed the payload block by block"""
    hasher = new_hash()
    chunks = sup.iter_chunks() if isinstance(sup, SoftwareUpdatePackage) else iter_blocks(sup)
    for block in chunks:
        hasher.update(block)
    return hasher


def _stream_reader(reader: BinaryIO, length: int):
    hasher = new_hash()
    try:
        for block in iter_file_blocks(reader, length):
            hasher.update(block)
    except EOFError as e:
        raise DecodeError(f"Payload truncated: {e}") from e
    return hasher


def partial_token(sup: SupLike, at_prev: Token) -> PartialToken:
    """
    PT = h(payload || at_prev)

    Args:
        sup: update package (or raw payload bytes)
        at_prev: 32-byte token

    Returns:
        32-byte partial token
    """
    require_token(at_prev, "at_prev")
    hasher = _stream_payload(sup)
    hasher.update(at_prev)
    return hasher.digest()


def partial_token_with_digest(sup: SupLike, at_prev: Token) -> Tuple[PartialToken, bytes]:
    """
    One pass over the payload giving (PT, h(payload)).

    The payload digest is taken from a copy of the hash state before the
    token is appended, so the payload is read once and h is started once.
    """
    require_token(at_prev, "at_prev")
    hasher = _stream_payload(sup)
    payload_digest = hasher.copy().digest()
    hasher.update(at_prev)
    return hasher.digest(), payload_digest


def partial_token_from_reader(reader: BinaryIO, length: int, at_prev: Token) -> Tuple[PartialToken, bytes]:
    """
    Like partial_token_with_digest, for a payload read from an open stream.

    Reads exactly `length` bytes in HASH_BLOCK_SIZE blocks; the payload is
    never held in memory.

    Raises:
        DecodeError: the stream ended early
    """
    require_token(at_prev, "at_prev")
    hasher = _stream_reader(reader, length)
    payload_digest = hasher.copy().digest()
    hasher.update(at_prev)
    return hasher.digest(), payload_digest


def make_transmission_token(sup: SupLike, at_curr: Token, at_prev: Token) -> TransmissionToken:
    """
    TT = AT_curr XOR h(SUP || AT_prev)

    Raises:
        InvalidTokenPairError: h(at_curr) != at_prev
    """
    require_token(at_curr, "at_curr")
    require_token(at_prev, "at_prev")
    if not hmac.compare_digest(sha256(at_curr), at_prev):
        logger.error("Invalid AT_curr and AT_prev combination")
        raise InvalidTokenPairError()
    return xor_bytes(at_curr, partial_token(sup, at_prev))


def derive_token(sup_rec: SupLike, tt: TransmissionToken, token: Token) -> Token:
    """DT = TT XOR h(SUP_rec || token)"""
    require_token(tt, "tt")
    return xor_bytes(tt, partial_token(sup_rec, token))


def verify(dt: Token, token: Token) -> VerificationOutcome:
    """
    Accept iff h(dt) == token. Exactly one hash invocation.

    Rejection is returned, not raised.
    """
    require_token(dt, "dt")
    require_token(token, "token")
    if hmac.compare_digest(sha256(dt), token):
        return VerificationOutcome(accepted=True, derived_token=dt, reason=REASON_OK)
    return VerificationOutcome(accepted=False, derived_token=None, reason=REASON_TOKEN_MISMATCH)
