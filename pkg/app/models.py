"""
Data Models - Định nghĩa các model dữ liệu

Protocol values (Seed, Token, TransmissionToken, PartialToken) are plain
32-byte `bytes`; the aliases below document intent. Structured types are
dataclasses, with from_dict/to_dict where they cross a JSON boundary
(scenarios, transcripts, reports, benchmark config).
"""

import os
from dataclasses import dataclass, field, replace
from typing import Optional, Dict, Any, Iterator, List

from app.config import (
    TOKEN_SIZE, HASH_BLOCK_SIZE, DEFAULT_TIMEOUT_TICKS, DEFAULT_REPETITIONS,
    DEFAULT_WARMUP, MIN_REPETITIONS, DEFAULT_MAX_EVENTS,
)
from app.exceptions import ConfigurationError, InvalidLengthError

Seed = bytes
Token = bytes
TransmissionToken = bytes
PartialToken = bytes

# VerificationOutcome / UpdateReport reasons
REASON_OK = "ok"
REASON_TOKEN_MISMATCH = "token-mismatch"
REASON_DECODE_ERROR = "decode-error"
REASON_NOT_ANCHORED = "not-anchored"

STATUS_SUCCESS = "success"
STATUS_FAILED = "failed"
MESSAGE_SUCCESS = "Update successful"
MESSAGE_FAILED = "Error: Update Failed"


def require_token(value: bytes, name: str = "token") -> bytes:
    """Kiểm tra độ dài token (32 bytes)"""
    if not isinstance(value, (bytes, bytearray)) or len(value) != TOKEN_SIZE:
        size = len(value) if isinstance(value, (bytes, bytearray)) else type(value).__name__
        raise InvalidLengthError(f"{name} must be {TOKEN_SIZE} bytes, got {size}")
    return bytes(value)


@dataclass
class HashChain:
    """
    Administrator-side hash chain T_1..T_n.

    tokens[i - 1] holds T_i. cursor is the index of the next AT_curr to
    issue: it starts at n-1 and reaches 0 when the chain is exhausted.
    """
    chain_id: bytes
    tokens: List[bytes]
    cursor: int

    @property
    def length_n(self) -> int:
        return len(self.tokens)

    @property
    def remaining(self) -> int:
        """Số lần cập nhật còn lại"""
        return self.cursor

    @property
    def issued(self) -> int:
        return self.length_n - 1 - self.cursor

    def token(self, index: int) -> bytes:
        """T_index (1-based)"""
        return self.tokens[index - 1]


@dataclass
class SoftwareUpdatePackage:
    """
    Model cho Software Update Package (SUP)

    An in-memory payload, or a file (`path`) that is read in blocks when it
    is hashed or copied into a bundle.
    """
    payload: bytes = b""
    name: Optional[str] = None
    path: Optional[str] = None

    @classmethod
    def from_file(cls, path: str) -> 'SoftwareUpdatePackage':
        """SUP backed by a file; nothing is read yet"""
        return cls(name=os.path.basename(path), path=path)

    @property
    def size(self) -> int:
        if self.path is not None:
            return os.path.getsize(self.path)
        return len(self.payload)

    def iter_chunks(self, block_size: int = HASH_BLOCK_SIZE) -> Iterator[bytes]:
        """Payload in blocks of at most block_size bytes"""
        if self.path is None:
            view = memoryview(self.payload)
            for offset in range(0, len(view), block_size):
                yield view[offset:offset + block_size]
            return
        with open(self.path, "rb") as f:
            while True:
                chunk = f.read(block_size)
                if not chunk:
                    break
                yield chunk

    def read_payload(self) -> bytes:
        """Whole payload in memory"""
        if self.path is None:
            return self.payload
        with open(self.path, "rb") as f:
            return f.read()


@dataclass(frozen=True)
class VerificationOutcome:
    """Kết quả kiểm tra h(DT) == token"""
    accepted: bool
    derived_token: Optional[bytes] = None
    reason: str = REASON_TOKEN_MISMATCH

    def __post_init__(self):
        if self.accepted != (self.reason == REASON_OK) or self.accepted != (self.derived_token is not None):
            raise ValueError("accepted, reason == ok and derived_token presence must agree")


@dataclass(frozen=True)
class UpdateBundle:
    """Wire unit: chain_id, ordinal, SUP payload, TT"""
    chain_id: bytes
    ordinal: int
    payload: bytes
    tt: bytes

    @property
    def sup_len(self) -> int:
        return len(self.payload)


@dataclass(frozen=True)
class UpdateReport:
    """
    CS → GS report.

    ordinal is the CS-side update counter: the installed ordinal on success,
    the still-expected ordinal on failure. The wire ordinal is never trusted.
    """
    chain_id: bytes
    ordinal: int
    status: str
    message: str
    reason: str = REASON_OK

    @property
    def success(self) -> bool:
        return self.status == STATUS_SUCCESS

    def to_dict(self) -> Dict[str, Any]:
        return {
            'chain_id': self.chain_id.hex(),
            'ordinal': self.ordinal,
            'status': self.status,
            'message': self.message,
            'reason': self.reason,
        }


@dataclass(frozen=True)
class InstallRecord:
    """Một bản cập nhật đã cài trên CS"""
    ordinal: int
    payload_digest: bytes


@dataclass
class CubeSatState:
    """CS persistent verifier state"""
    chain_id: bytes
    token: bytes
    installed: List[InstallRecord] = field(default_factory=list)

    @property
    def accepted_count(self) -> int:
        return len(self.installed)


@dataclass(frozen=True)
class ForwardRecord:
    """Nhật ký chuyển tiếp của Ground Station"""
    chain_id: bytes
    bundle_digest: bytes
    disposition: str


# ---------------------------------------------------------------------------
# Simulator models
# ---------------------------------------------------------------------------

ACTION_KINDS = ("deliver", "drop", "replay", "tamper", "swap_tt", "inject", "flood")
TAMPER_TARGETS = ("payload", "tt")
FORGERY_STRATEGIES = ("random", "garbage", "stale_tt")


@dataclass(frozen=True)
class Mutation:
    """
    Bit/byte mutation of a bundle's payload or TT.

    bit: flip one bit (bit 0 = most significant bit of byte 0).
    byte + xor_mask: XOR one byte. Neither set: identity.
    """
    target: str = "payload"
    bit: Optional[int] = None
    byte: Optional[int] = None
    xor_mask: int = 0xFF

    @property
    def is_identity(self) -> bool:
        return self.bit is None and self.byte is None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Mutation':
        target = data.get('target', 'payload')
        if target not in TAMPER_TARGETS:
            raise ConfigurationError(f"tamper target must be one of {TAMPER_TARGETS}, got {target!r}")
        bit = data.get('bit')
        byte = data.get('byte')
        for label, value in (('bit', bit), ('byte', byte)):
            if value is not None and (not isinstance(value, int) or value < 0):
                raise ConfigurationError(f"tamper {label} must be a non-negative integer")
        xor_mask = data.get('xor', 0xFF)
        if not isinstance(xor_mask, int) or not 1 <= xor_mask <= 0xFF:
            raise ConfigurationError("tamper xor must be in [1, 255]")
        return cls(target=target, bit=bit, byte=byte, xor_mask=xor_mask)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'target': self.target}
        if self.bit is not None:
            data['bit'] = self.bit
        if self.byte is not None:
            data['byte'] = self.byte
            data['xor'] = self.xor_mask
        return data


@dataclass(frozen=True)
class ChannelAction:
    """
    One adversary/channel decision.

    ref indexes the adversary's capture log (bundles observed on the
    channel; negative counts from the end): the replayed bundle, or the TT
    source of swap_tt. base, when set, makes tamper/swap_tt build a fresh
    injection from captured[base] instead of modifying the bundle in flight.
    position is the schedule slot the action was applied to.
    """
    kind: str
    ref: int = -1
    base: Optional[int] = None
    mutation: Optional[Mutation] = None
    count: int = 1
    strategy: str = "random"
    position: int = -1

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ChannelAction':
        """Tạo ChannelAction từ dictionary"""
        if not isinstance(data, dict):
            raise ConfigurationError(f"action must be an object, got {data!r}")
        kind = data.get('kind')
        if kind not in ACTION_KINDS:
            raise ConfigurationError(f"unknown action kind {kind!r}; expected one of {ACTION_KINDS}")
        ref = data.get('ref', -1)
        if not isinstance(ref, int):
            raise ConfigurationError("action ref must be an integer")
        base = data.get('base')
        if base is not None and not isinstance(base, int):
            raise ConfigurationError("action base must be an integer")
        count = data.get('count', 1)
        if not isinstance(count, int) or count < 1:
            raise ConfigurationError("flood count must be >= 1")
        strategy = data.get('strategy', 'random')
        if strategy not in FORGERY_STRATEGIES:
            raise ConfigurationError(f"forgery strategy must be one of {FORGERY_STRATEGIES}")
        mutation = None
        if kind == 'tamper':
            mutation = Mutation.from_dict(data.get('mutation', {}))
        return cls(kind=kind, ref=ref, base=base, mutation=mutation, count=count, strategy=strategy)

    def at(self, position: int) -> 'ChannelAction':
        """Copy stamped with its schedule slot"""
        return replace(self, position=position)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'kind': self.kind, 'position': self.position}
        if self.kind in ('replay', 'swap_tt'):
            data['ref'] = self.ref
        if self.base is not None:
            data['base'] = self.base
        if self.kind in ('inject', 'flood'):
            data['strategy'] = self.strategy
        if self.kind == 'flood':
            data['count'] = self.count
        if self.mutation is not None:
            data['mutation'] = self.mutation.to_dict()
        return data


@dataclass
class Scenario:
    """
    Simulation scenario.

    Either `actions` (scripted) or `rates` + `adversarial_actions`
    (stochastic) drive the adversary. `updates` entries are strings (UTF-8
    payload), {"hex": ...} or {"size": N} (random bytes from the scenario rng).
    """
    name: str = "scenario"
    description: str = ""
    rng_seed: int = 0
    chain_length: int = 3
    updates: List[Any] = field(default_factory=list)
    actions: List[ChannelAction] = field(default_factory=list)
    rates: Dict[str, float] = field(default_factory=dict)
    adversarial_actions: int = 0
    timeout_ticks: int = DEFAULT_TIMEOUT_TICKS
    max_events: int = DEFAULT_MAX_EVENTS
    expect: Dict[str, Any] = field(default_factory=dict)
    chain_seed: Optional[bytes] = None

    @property
    def stochastic(self) -> bool:
        return bool(self.rates)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Scenario':
        """Tạo Scenario từ dictionary (raises ConfigurationError)"""
        chain_length = data.get('chain_length', 3)
        if not isinstance(chain_length, int) or chain_length < 2:
            raise ConfigurationError("chain_length must be an integer >= 2")

        updates = data.get('updates', [])
        if not isinstance(updates, list):
            raise ConfigurationError("updates must be a list")
        for entry in updates:
            if isinstance(entry, str):
                continue
            if isinstance(entry, dict) and ('hex' in entry or 'size' in entry):
                if 'hex' in entry:
                    try:
                        bytes.fromhex(entry['hex'])
                    except (TypeError, ValueError) as e:
                        raise ConfigurationError(f"bad update hex: {entry['hex']!r}") from e
                elif not isinstance(entry['size'], int) or entry['size'] < 0:
                    raise ConfigurationError("update size must be a non-negative integer")
                continue
            raise ConfigurationError(f"bad update entry {entry!r}")
        if len(updates) > chain_length - 1:
            raise ConfigurationError(
                f"{len(updates)} updates do not fit a chain of length {chain_length} "
                f"(supports {chain_length - 1})")

        raw_actions = data.get('actions', [])
        if not isinstance(raw_actions, list):
            raise ConfigurationError("actions must be a list")
        actions = [ChannelAction.from_dict(item) for item in raw_actions]

        rates = data.get('rates', {})
        if not isinstance(rates, dict):
            raise ConfigurationError("rates must be an object")
        for kind, weight in rates.items():
            if kind not in ACTION_KINDS:
                raise ConfigurationError(f"unknown rate kind {kind!r}")
            if not isinstance(weight, (int, float)) or weight < 0:
                raise ConfigurationError(f"rate for {kind} must be a non-negative number")
        if rates and sum(rates.values()) <= 0:
            raise ConfigurationError("rates must not all be zero")
        if rates and actions:
            raise ConfigurationError("use either scripted actions or stochastic rates, not both")

        rng_seed = data.get('rng_seed', 0)
        if not isinstance(rng_seed, int) or not 0 <= rng_seed < 2 ** 64:
            raise ConfigurationError("rng_seed must be an unsigned 64-bit integer")

        timeout_ticks = data.get('timeout_ticks', DEFAULT_TIMEOUT_TICKS)
        if not isinstance(timeout_ticks, int) or timeout_ticks < 1:
            raise ConfigurationError("timeout_ticks must be a positive integer")

        adversarial_actions = data.get('adversarial_actions', 0)
        if not isinstance(adversarial_actions, int) or adversarial_actions < 0:
            raise ConfigurationError("adversarial_actions must be a non-negative integer")

        max_events = data.get('max_events', DEFAULT_MAX_EVENTS)
        if not isinstance(max_events, int) or max_events < 1:
            raise ConfigurationError("max_events must be a positive integer")

        expect = data.get('expect', {})
        if not isinstance(expect, dict):
            raise ConfigurationError("expect must be an object")

        chain_seed = data.get('chain_seed')
        if chain_seed is not None:
            try:
                chain_seed = bytes.fromhex(chain_seed)
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"chain_seed must be hex: {chain_seed!r}") from e
            if len(chain_seed) != TOKEN_SIZE:
                raise ConfigurationError(f"chain_seed must be {TOKEN_SIZE} bytes")

        return cls(
            name=str(data.get('name', 'scenario')),
            description=str(data.get('description', '')),
            rng_seed=rng_seed,
            chain_length=chain_length,
            updates=updates,
            actions=actions,
            rates=dict(rates),
            adversarial_actions=adversarial_actions,
            timeout_ticks=timeout_ticks,
            max_events=max_events,
            expect=expect,
            chain_seed=chain_seed,
        )


@dataclass
class TranscriptEvent:
    """Một sự kiện trong transcript mô phỏng"""
    seq: int
    tick: int
    kind: str
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {'seq': self.seq, 'tick': self.tick, 'kind': self.kind, **self.detail}


@dataclass
class Transcript:
    """Ordered events plus summary counters"""
    scenario: str
    rng_seed: int
    events: List[TranscriptEvent] = field(default_factory=list)
    accepted: int = 0
    rejected_by_reason: Dict[str, int] = field(default_factory=dict)
    forgeries_accepted: int = 0
    genuine_rejected: int = 0
    adversarial_actions: int = 0
    cs_hash_invocations: int = 0
    completed: bool = False
    final_token: Optional[bytes] = None
    final_token_index: Optional[int] = None
    state_isolation_violations: int = 0

    @property
    def rejected(self) -> int:
        return sum(self.rejected_by_reason.values())

    def record(self, tick: int, kind: str, **detail) -> TranscriptEvent:
        event = TranscriptEvent(seq=len(self.events), tick=tick, kind=kind, detail=detail)
        self.events.append(event)
        return event

    def summary(self) -> Dict[str, Any]:
        return {
            'scenario': self.scenario,
            'rng_seed': self.rng_seed,
            'events': len(self.events),
            'accepted': self.accepted,
            'rejected': self.rejected,
            'rejected_by_reason': dict(sorted(self.rejected_by_reason.items())),
            'forgeries_accepted': self.forgeries_accepted,
            'genuine_rejected': self.genuine_rejected,
            'adversarial_actions': self.adversarial_actions,
            'cs_hash_invocations': self.cs_hash_invocations,
            'state_isolation_violations': self.state_isolation_violations,
            'completed': self.completed,
            'final_token': self.final_token.hex() if self.final_token else None,
            'final_token_index': self.final_token_index,
        }


# ---------------------------------------------------------------------------
# Benchmark models
# ---------------------------------------------------------------------------

PRIMITIVES = ("hash", "sign", "verify_signature", "encrypt", "decrypt")


@dataclass(frozen=True)
class CorpusEntry:
    """Payload nguồn cho benchmark: file, URL hoặc kích thước tổng hợp"""
    name: str
    size_mb: Optional[float] = None
    path: Optional[str] = None
    url: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CorpusEntry':
        if not isinstance(data, dict) or not data.get('name'):
            raise ConfigurationError(f"corpus entry needs a name: {data!r}")
        size_mb = data.get('size_mb')
        if size_mb is not None and (not isinstance(size_mb, (int, float)) or size_mb < 0):
            raise ConfigurationError(f"corpus size_mb must be a non-negative number: {data!r}")
        if size_mb is None and not data.get('path') and not data.get('url'):
            raise ConfigurationError(f"corpus entry {data['name']!r} needs size_mb, path or url")
        return cls(name=str(data['name']), size_mb=size_mb, path=data.get('path'), url=data.get('url'))

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'size_mb': self.size_mb, 'path': self.path, 'url': self.url}


@dataclass
class BenchConfig:
    """Cấu hình benchmark"""
    corpus: List[CorpusEntry] = field(default_factory=list)
    primitives: List[str] = field(default_factory=lambda: list(PRIMITIVES))
    repetitions: int = DEFAULT_REPETITIONS
    warmup: int = DEFAULT_WARMUP
    chain_sizes: List[int] = field(default_factory=list)
    seed: int = 0
    fetch: bool = False
    cache_dir: str = ".bench_corpus"
    isolation: bool = True
    workers: int = 1

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BenchConfig':
        """Tạo BenchConfig từ dictionary (raises ConfigurationError)"""
        corpus = [CorpusEntry.from_dict(item) for item in data.get('corpus', [])]

        primitives = data.get('primitives', list(PRIMITIVES))
        if not isinstance(primitives, list) or any(p not in PRIMITIVES for p in primitives):
            raise ConfigurationError(f"primitives must be a subset of {PRIMITIVES}")

        repetitions = data.get('repetitions', DEFAULT_REPETITIONS)
        if not isinstance(repetitions, int) or repetitions < MIN_REPETITIONS:
            raise ConfigurationError(f"repetitions must be an integer >= {MIN_REPETITIONS}")

        warmup = data.get('warmup', DEFAULT_WARMUP)
        if not isinstance(warmup, int) or warmup < 0:
            raise ConfigurationError("warmup must be a non-negative integer")

        chain_sizes = data.get('chain_sizes', [])
        if not isinstance(chain_sizes, list) or any(not isinstance(n, int) or n < 2 for n in chain_sizes):
            raise ConfigurationError("chain_sizes must be a list of integers >= 2")

        workers = data.get('workers', 1)
        if not isinstance(workers, int) or workers < 1:
            raise ConfigurationError("workers must be a positive integer")

        return cls(
            corpus=corpus,
            primitives=list(primitives),
            repetitions=repetitions,
            warmup=warmup,
            chain_sizes=list(chain_sizes),
            seed=int(data.get('seed', 0)),
            fetch=bool(data.get('fetch', False)),
            cache_dir=str(data.get('cache_dir', '.bench_corpus')),
            isolation=bool(data.get('isolation', True)),
            workers=workers,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'corpus': [entry.to_dict() for entry in self.corpus],
            'primitives': self.primitives,
            'repetitions': self.repetitions,
            'warmup': self.warmup,
            'chain_sizes': self.chain_sizes,
            'seed': self.seed,
            'fetch': self.fetch,
            'cache_dir': self.cache_dir,
            'isolation': self.isolation,
            'workers': self.workers,
        }
