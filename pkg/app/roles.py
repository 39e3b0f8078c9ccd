"""
Roles - Administrator, Ground Station và CubeSat

COMPONENT OVERVIEW:
------------------
Administrator: one hash chain per satellite (registry keyed by chain_id),
    issues UpdateBundles, keeps the last issued bundle per chain for
    retransmission, clears it on a matching success report. A new bundle is
    refused while the previous one is unacknowledged.
GroundStation: forwards bundles byte-for-byte and logs what it forwarded.
CubeSat: holds `token` (initially the trust anchor); accepts a bundle iff
    h(TT XOR h(SUP || token)) == token, then installs and sets token := DT.

CS STATE FILE FORMAT (big-endian):
---------------------------------
magic "CSUMSAT1" | version (1) | chain_id (16) | token (32) | accepted-count (u32)
| accepted-count * 32-byte payload digests | SHA-256 of everything before (32)

ERROR HANDLING:
--------------
- Rejections are UpdateReports, never exceptions
- State is persisted before a success report is returned; a failed write
  rolls the in-memory state back and propagates
- Corrupted state files raise IntegrityError on restore
"""

import hashlib
import logging
import os
import struct
from typing import Dict, List, Optional, Tuple, Union

from app.config import TOKEN_SIZE, CHAIN_ID_SIZE
from app.exceptions import (
    ConfigurationError, DecodeError, IntegrityError, PendingBundleError, UnknownChainError,
)
from app.hashchain import build_chain, generate_seed, next_token_pair, peek_token_pair, trust_anchor
from app.models import (
    CubeSatState, ForwardRecord, HashChain, InstallRecord, PartialToken, SoftwareUpdatePackage, Token,
    TransmissionToken, UpdateBundle, UpdateReport, require_token,
    MESSAGE_FAILED, MESSAGE_SUCCESS, STATUS_FAILED, STATUS_SUCCESS,
    REASON_DECODE_ERROR, REASON_NOT_ANCHORED, REASON_OK,
)
from app.token_protocol import (
    make_transmission_token, partial_token_from_reader, partial_token_with_digest, verify,
)
from app.utils import file_checksum, token_preview, xor_bytes
from app.wire import decode_bundle, encode_bundle, read_bundle_header, read_bundle_tt

STATE_MAGIC = b"CSUMSAT1"
STATE_VERSION = 1
_STATE_HEADER = struct.Struct(">8sB16s32sI")
STATE_HEADER_SIZE = _STATE_HEADER.size  # 61

BundleLike = Union[UpdateBundle, bytes, bytearray]


# ---------------------------------------------------------------------------
# Administrator
# ---------------------------------------------------------------------------

class Administrator:
    """Quản lý các hash chain (mỗi vệ tinh một chain) và phát hành bản cập nhật"""

    MAX_PROVISION_ATTEMPTS = 8

    def __init__(self, db=None):
        self.registry: Dict[bytes, HashChain] = {}
        self.pending: Dict[bytes, UpdateBundle] = {}
        self.db = db
        self.logger = logging.getLogger(__name__ + ".Administrator")

        if self.db is not None:
            for chain in self.db.get_all_chains():
                self.registry[chain.chain_id] = chain
            for bundle in self.db.get_all_pending():
                self.pending[bundle.chain_id] = bundle
            self.logger.info(f"Loaded {len(self.registry)} chains from registry")

    def provision(self, n: int, seed: Optional[bytes] = None) -> Tuple[bytes, Token]:
        """
        Register a new chain of length n.

        Args:
            n: chain length (supports n - 1 updates)
            seed: explicit seed (tests); a fresh CSPRNG seed otherwise

        Returns:
            (chain_id, trust_anchor) for out-of-band installation on the CS
        """
        for attempt in range(self.MAX_PROVISION_ATTEMPTS):
            chain_seed = bytearray(seed) if seed is not None else generate_seed()
            chain = build_chain(chain_seed, n, wipe_seed=True)
            if chain.chain_id not in self.registry:
                break
            if seed is not None:
                raise ConfigurationError(f"Chain {chain.chain_id.hex()} already registered")
            self.logger.warning(f"chain_id collision on attempt {attempt + 1}, retrying")
        else:
            raise ConfigurationError("Could not allocate a unique chain_id")

        self.registry[chain.chain_id] = chain
        if self.db is not None:
            self.db.save_chain(chain)

        anchor = trust_anchor(chain)
        self.logger.info(f"Provisioned chain {chain.chain_id.hex()} n={n} anchor={token_preview(anchor)}")
        return chain.chain_id, anchor

    def register_chain(self, chain: HashChain):
        """Thêm chain đã có (vd. load từ chain file)"""
        self.registry[chain.chain_id] = chain
        if self.db is not None:
            self.db.save_chain(chain)

    def get_chain(self, chain_id: bytes) -> HashChain:
        chain = self.registry.get(chain_id)
        if chain is None:
            raise UnknownChainError(f"Unknown chain_id {chain_id.hex()}")
        return chain

    def advance(self, chain_id: bytes, sup: SoftwareUpdatePackage) -> Tuple[int, TransmissionToken]:
        """
        Consume the next token pair for `sup` without recording a pending
        bundle (chain-file mode, where the bundle is streamed to disk).

        Returns:
            (ordinal, TT)

        Raises:
            UnknownChainError, ChainExhaustedError
        """
        chain = self.get_chain(chain_id)
        at_curr, at_prev = peek_token_pair(chain)
        tt = make_transmission_token(sup, at_curr, at_prev)
        next_token_pair(chain)
        if self.db is not None:
            self.db.save_chain(chain)
        return chain.issued, tt

    def issue(self, chain_id: bytes, sup: SoftwareUpdatePackage, allow_pending: bool = False) -> UpdateBundle:
        """
        Build the next bundle: TT from next_token_pair, recorded as pending.

        Args:
            allow_pending: issue even though the previous bundle is not
                acknowledged; only the newest bundle stays retransmittable

        Raises:
            UnknownChainError, ChainExhaustedError, PendingBundleError
        """
        chain = self.get_chain(chain_id)
        peek_token_pair(chain)
        previous = self.pending.get(chain_id)
        if previous is not None:
            if not allow_pending:
                raise PendingBundleError(chain_id.hex(), previous.ordinal)
            self.logger.warning(f"Superseding unacknowledged bundle #{previous.ordinal} on {chain_id.hex()}")

        ordinal, tt = self.advance(chain_id, sup)
        bundle = UpdateBundle(chain_id=chain_id, ordinal=ordinal, payload=sup.read_payload(), tt=tt)
        self.pending[chain_id] = bundle
        if self.db is not None:
            self.db.save_pending(bundle)

        self.logger.info(
            f"Issued update #{bundle.ordinal} ({sup.name or 'unnamed'}, {sup.size} bytes) "
            f"on {chain_id.hex()}, {chain.remaining} remaining")
        return bundle

    def retransmit(self, chain_id: bytes) -> Optional[UpdateBundle]:
        """Pending bundle, unchanged; the cursor does not move"""
        self.get_chain(chain_id)
        bundle = self.pending.get(chain_id)
        if bundle is not None:
            self.logger.info(f"Retransmitting update #{bundle.ordinal} on {chain_id.hex()}")
        return bundle

    def acknowledge(self, chain_id: bytes, report: UpdateReport) -> bool:
        """Clear pending on a success report for the in-flight ordinal"""
        bundle = self.pending.get(chain_id)
        if bundle is None or not report.success or report.ordinal != bundle.ordinal:
            return False
        del self.pending[chain_id]
        if self.db is not None:
            self.db.clear_pending(chain_id)
        self.logger.info(f"Update #{bundle.ordinal} acknowledged on {chain_id.hex()}")
        return True

    def handle_report(self, chain_id: bytes, report: UpdateReport) -> Optional[UpdateBundle]:
        """
        Ack on success; on a failed report for the in-flight ordinal (nack)
        return the pending bundle for retransmission.
        """
        if report.success:
            self.acknowledge(chain_id, report)
            return None
        bundle = self.pending.get(chain_id)
        if bundle is not None and report.ordinal == bundle.ordinal:
            return bundle
        return None


# ---------------------------------------------------------------------------
# Ground Station
# ---------------------------------------------------------------------------

class GroundStation:
    """Chuyển tiếp bundle tới CS, không sửa đổi"""

    def __init__(self):
        self.forwarding_log: List[ForwardRecord] = []
        self.reports: List[UpdateReport] = []
        self.logger = logging.getLogger(__name__ + ".GroundStation")

    def relay(self, bundle: BundleLike) -> BundleLike:
        """Byte-identity forward; appends to the forwarding log"""
        if isinstance(bundle, UpdateBundle):
            chain_id = bundle.chain_id
            digest = hashlib.sha256(encode_bundle(bundle)).digest()
        else:
            chain_id = bytes(bundle[8:8 + CHAIN_ID_SIZE])
            digest = hashlib.sha256(bundle).digest()
        self.forwarding_log.append(ForwardRecord(chain_id=chain_id, bundle_digest=digest, disposition="forwarded"))
        self.logger.debug(f"Forwarded bundle {digest.hex()[:8]} for {chain_id.hex()}")
        return bundle

    def receive_report(self, report: UpdateReport):
        self.reports.append(report)


# ---------------------------------------------------------------------------
# CubeSat
# ---------------------------------------------------------------------------

def encode_state(state: CubeSatState) -> bytes:
    """Serialize CS state in the CSUMSAT1 layout"""
    body = _STATE_HEADER.pack(STATE_MAGIC, STATE_VERSION, state.chain_id, state.token, len(state.installed))
    body += b"".join(record.payload_digest for record in state.installed)
    return body + file_checksum(body)


def decode_state(data: bytes) -> CubeSatState:
    """
    Parse and validate a CSUMSAT1 state file.

    Raises:
        IntegrityError: bad magic/version, truncation or checksum mismatch
    """
    if len(data) < STATE_HEADER_SIZE + TOKEN_SIZE:
        raise IntegrityError(f"State file truncated ({len(data)} bytes)")

    magic, version, chain_id, token, count = _STATE_HEADER.unpack_from(data, 0)
    if magic != STATE_MAGIC:
        raise IntegrityError("State file has bad magic")
    if version != STATE_VERSION:
        raise IntegrityError(f"Unsupported state file version {version}")

    expected = STATE_HEADER_SIZE + count * TOKEN_SIZE + TOKEN_SIZE
    if len(data) != expected:
        raise IntegrityError(f"State file length {len(data)} != expected {expected}")
    body, checksum = data[:-TOKEN_SIZE], data[-TOKEN_SIZE:]
    if file_checksum(body) != checksum:
        raise IntegrityError("State file checksum mismatch")

    installed = [
        InstallRecord(ordinal=i + 1, payload_digest=body[offset:offset + TOKEN_SIZE])
        for i, offset in enumerate(range(STATE_HEADER_SIZE, STATE_HEADER_SIZE + count * TOKEN_SIZE, TOKEN_SIZE))
    ]
    return CubeSatState(chain_id=chain_id, token=token, installed=installed)


class CubeSat:
    """Bộ xác thực cập nhật phía vệ tinh"""

    def __init__(self, state: Optional[CubeSatState] = None, storage=None):
        self.state = state
        self.storage = storage
        self.logger = logging.getLogger(__name__ + ".CubeSat")

    @classmethod
    def provision(cls, chain_id: bytes, anchor: Token, storage=None) -> 'CubeSat':
        """Fresh CS with token = trust anchor (pre-launch installation)"""
        cs = cls(storage=storage)
        cs.re_anchor(chain_id, anchor)
        return cs

    @classmethod
    def restore(cls, storage) -> 'CubeSat':
        """
        Load persisted state.

        Raises:
            IntegrityError: corrupted or truncated state
        """
        try:
            data = storage.read()
        except FileNotFoundError as e:
            raise IntegrityError("No CS state found; provision or re-anchor first") from e
        return cls(state=decode_state(data), storage=storage)

    @property
    def token(self) -> Optional[Token]:
        return self.state.token if self.state else None

    def persist(self):
        """Ghi trạng thái (no-op khi không có storage)"""
        if self.storage is not None and self.state is not None:
            self.storage.write(encode_state(self.state))

    def re_anchor(self, chain_id: bytes, anchor: Token):
        """Install a new trust anchor; clears the install log"""
        require_token(anchor, "trust anchor")
        if len(chain_id) != CHAIN_ID_SIZE:
            raise IntegrityError(f"chain_id must be {CHAIN_ID_SIZE} bytes")
        self.state = CubeSatState(chain_id=bytes(chain_id), token=bytes(anchor), installed=[])
        self.persist()
        self.logger.info(f"Anchored to chain {chain_id.hex()} token={token_preview(anchor)}")

    def _report(self, status: str, reason: str) -> UpdateReport:
        chain_id = self.state.chain_id if self.state else bytes(CHAIN_ID_SIZE)
        count = self.state.accepted_count if self.state else 0
        if status == STATUS_SUCCESS:
            return UpdateReport(chain_id=chain_id, ordinal=count, status=STATUS_SUCCESS,
                                message=MESSAGE_SUCCESS, reason=REASON_OK)
        return UpdateReport(chain_id=chain_id, ordinal=count + 1, status=STATUS_FAILED,
                            message=MESSAGE_FAILED, reason=reason)

    def handle(self, bundle: BundleLike) -> UpdateReport:
        """
        Verify and install one bundle.

        PT := h(SUP_rec || token); DT := TT XOR PT; accept iff h(DT) == token.
        Exactly two hash invocations per decision.
        """
        if self.state is None:
            self.logger.warning("Bundle refused: CS not anchored")
            return self._report(STATUS_FAILED, REASON_NOT_ANCHORED)

        if not isinstance(bundle, UpdateBundle):
            try:
                bundle = decode_bundle(bundle)
            except DecodeError as e:
                self.logger.info(f"Update rejected: {e}")
                return self._report(STATUS_FAILED, REASON_DECODE_ERROR)
        elif len(bundle.tt) != TOKEN_SIZE:
            self.logger.info(f"Update rejected: TT has {len(bundle.tt)} bytes")
            return self._report(STATUS_FAILED, REASON_DECODE_ERROR)

        self._check_chain_id(bundle.chain_id)
        pt, payload_digest = partial_token_with_digest(bundle.payload, self.state.token)
        return self._decide(pt, payload_digest, bundle.tt)

    def handle_file(self, path: str) -> UpdateReport:
        """
        Verify and install a bundle file without loading it into memory.

        The header is read and its sup_len checked against the file size,
        then the payload is hashed in blocks, then the TT is read. Same
        decisions and hash count as handle().

        Raises:
            OSError: the bundle file cannot be opened
        """
        if self.state is None:
            self.logger.warning("Bundle refused: CS not anchored")
            return self._report(STATUS_FAILED, REASON_NOT_ANCHORED)

        with open(path, "rb") as f:
            try:
                chain_id, _, sup_len = read_bundle_header(f, total_size=os.fstat(f.fileno()).st_size)
                self._check_chain_id(chain_id)
                pt, payload_digest = partial_token_from_reader(f, sup_len, self.state.token)
                tt = read_bundle_tt(f)
            except DecodeError as e:
                self.logger.info(f"Update rejected: {e}")
                return self._report(STATUS_FAILED, REASON_DECODE_ERROR)
        return self._decide(pt, payload_digest, tt)

    def _check_chain_id(self, chain_id: bytes):
        if chain_id != self.state.chain_id:
            self.logger.debug(f"Bundle chain_id {chain_id.hex()} differs from {self.state.chain_id.hex()}")

    def _decide(self, pt: PartialToken, payload_digest: bytes, tt: TransmissionToken) -> UpdateReport:
        dt = xor_bytes(tt, pt)
        outcome = verify(dt, self.state.token)

        if not outcome.accepted:
            self.logger.info(f"Update rejected ({outcome.reason}), token stays {token_preview(self.state.token)}")
            return self._report(STATUS_FAILED, outcome.reason)

        previous_token = self.state.token
        self.state.installed.append(InstallRecord(ordinal=self.state.accepted_count + 1, payload_digest=payload_digest))
        self.state.token = outcome.derived_token
        try:
            self.persist()
        except Exception:
            self.state.installed.pop()
            self.state.token = previous_token
            self.logger.error("Could not persist CS state, update rolled back")
            raise

        self.logger.info(f"Update #{self.state.accepted_count} installed, token := {token_preview(self.state.token)}")
        return self._report(STATUS_SUCCESS, REASON_OK)


# ---------------------------------------------------------------------------
# Operation-style entry points
# ---------------------------------------------------------------------------

def admin_provision(admin: Administrator, n: int) -> Tuple[bytes, Token]:
    return admin.provision(n)


def admin_issue(admin: Administrator, chain_id: bytes, sup: SoftwareUpdatePackage) -> UpdateBundle:
    return admin.issue(chain_id, sup)


def admin_acknowledge(admin: Administrator, chain_id: bytes, report: UpdateReport) -> bool:
    return admin.acknowledge(chain_id, report)


def admin_retransmit(admin: Administrator, chain_id: bytes) -> Optional[UpdateBundle]:
    return admin.retransmit(chain_id)


def gs_relay(gs: GroundStation, bundle: BundleLike) -> BundleLike:
    return gs.relay(bundle)


def cs_handle(cs: CubeSat, bundle: BundleLike) -> UpdateReport:
    return cs.handle(bundle)


def cs_persist(cs: CubeSat, storage=None):
    """Persist to `storage` (defaults to the CS's own storage)"""
    if storage is not None:
        cs.storage = storage
    cs.persist()


def cs_restore(storage) -> CubeSat:
    return CubeSat.restore(storage)
