"""
Simnet - Mô phỏng kênh truyền có kẻ tấn công (discrete-event)

COMPONENT OVERVIEW:
------------------
Administrator -> GroundStation -> [adversarial channel] -> CubeSat -> reports -> GS/Administrator

The adversary eavesdrops every bundle the GS sends (capture log) and, per
channel slot, takes one ChannelAction:
- deliver: pass the in-flight bundle through
- drop: lose it; the GS retransmits after `timeout_ticks`
- tamper / swap_tt: modify the in-flight bundle (or, with `base`, inject a
  modified copy of an earlier capture)
- replay / inject / flood: deliver captured or forged bundles ahead of the
  in-flight one
Scripted scenarios consume one action per GS transmission; once every update
is acknowledged, leftover actions run in idle slots. Stochastic scenarios
draw actions from `rates` until `adversarial_actions` are spent.

Time is simulated in ticks; all randomness comes from the scenario rng, so
the transcript is a pure function of (scenario, rng_seed).

EVENTS:
-------
ISSUE, TRANSMIT (inline), DELIVER, REPORT, TIMEOUT, IDLE_SLOT
"""

import heapq
import json
import logging
import random
from collections import deque
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional, Tuple

from app.config import TOKEN_SIZE
from app.exceptions import ConfigurationError, DecodeError
from app.models import (
    ChannelAction, Mutation, Scenario, SoftwareUpdatePackage, Transcript, UpdateBundle,
    ACTION_KINDS, FORGERY_STRATEGIES, TAMPER_TARGETS,
)
from app.roles import Administrator, CubeSat, GroundStation
from app.storage import MemoryStorage
from app.utils import counting_hashes, load_json_config
from app.wire import decode_bundle, encode_bundle

logger = logging.getLogger(__name__)

LATENCY_TICKS = 1


class DiscreteEventSimulator:
    """Hàng đợi sự kiện (heapq) với handler đăng ký theo tên sự kiện"""

    def __init__(self):
        self.queue: List[Tuple[int, int, str, Dict[str, Any]]] = []
        self.current_time = 0
        self.events_processed = 0
        self._seq = 0
        self.handlers: Dict[str, Callable[..., None]] = {}

    def register_handler(self, kind: str, handler: Callable[..., None]):
        self.handlers[kind] = handler

    def schedule(self, delay: int, kind: str, **data):
        heapq.heappush(self.queue, (self.current_time + delay, self._seq, kind, data))
        self._seq += 1

    def step(self) -> bool:
        """Xử lý một sự kiện; False khi hàng đợi rỗng"""
        if not self.queue:
            return False
        time, _, kind, data = heapq.heappop(self.queue)
        self.current_time = time
        self.handlers[kind](**data)
        self.events_processed += 1
        return True

    def run(self, max_events: int) -> bool:
        """Run until drained or max_events; True if the queue drained"""
        while self.events_processed < max_events:
            if not self.step():
                return True
        return not self.queue


# ---------------------------------------------------------------------------
# Attack primitives
# ---------------------------------------------------------------------------

def attack_tamper(bundle: UpdateBundle, mutation: Optional[Mutation]) -> UpdateBundle:
    """
    Mutated copy of `bundle`; the original is untouched.

    Bit/byte indexes wrap modulo the target length. A payload mutation on an
    empty payload falls through to the TT.
    """
    if mutation is None or mutation.is_identity:
        return replace(bundle)

    target = mutation.target
    if target == "payload" and not bundle.payload:
        target = "tt"
    data = bytearray(bundle.payload if target == "payload" else bundle.tt)

    if mutation.bit is not None:
        index = mutation.bit % (len(data) * 8)
        data[index // 8] ^= 0x80 >> (index % 8)
    else:
        data[mutation.byte % len(data)] ^= mutation.xor_mask

    if target == "payload":
        return replace(bundle, payload=bytes(data))
    return replace(bundle, tt=bytes(data))


def forge_bundle(strategy: str, chain_id: bytes, rng: random.Random,
                 captured: Optional[List[UpdateBundle]] = None) -> bytes:
    """
    Wire bytes of one forged bundle.

    random: random payload and TT; garbage: random bytes (usually undecodable);
    stale_tt: a captured TT on a random payload.
    """
    if strategy == "garbage":
        return rng.randbytes(rng.randint(0, 96))

    payload = rng.randbytes(rng.randint(0, 64))
    ordinal = rng.randint(1, 2 ** 16)
    if strategy == "stale_tt" and captured:
        tt = captured[rng.randrange(len(captured))].tt
    else:
        tt = rng.randbytes(TOKEN_SIZE)
    return encode_bundle(UpdateBundle(chain_id=chain_id, ordinal=ordinal, payload=payload, tt=tt))


def attack_flood(target: CubeSat, count: int, forgery_strategy: str = "random",
                 rng: Optional[random.Random] = None,
                 captured: Optional[List[UpdateBundle]] = None) -> Transcript:
    """
    Deliver `count` forged bundles straight to a CubeSat.

    Returns:
        Transcript fragment with one decision event per forgery and the CS
        hash-invocation total
    """
    if count < 1:
        raise ConfigurationError("flood count must be >= 1")
    if forgery_strategy not in FORGERY_STRATEGIES:
        raise ConfigurationError(f"forgery strategy must be one of {FORGERY_STRATEGIES}")

    rng = rng or random.Random(0)
    chain_id = target.state.chain_id if target.state else bytes(16)
    fragment = Transcript(scenario="flood", rng_seed=0, adversarial_actions=1)

    for i in range(count):
        data = forge_bundle(forgery_strategy, chain_id, rng, captured)
        with counting_hashes() as counter:
            report = target.handle(data)
        fragment.cs_hash_invocations += counter.count
        if report.success:
            fragment.accepted += 1
            fragment.forgeries_accepted += 1
        else:
            fragment.rejected_by_reason[report.reason] = fragment.rejected_by_reason.get(report.reason, 0) + 1
        fragment.record(i, "decision", origin="flood", accepted=report.success,
                        reason=report.reason, hashes=counter.count, bytes=len(data))

    fragment.completed = True
    fragment.final_token = target.token
    logger.debug(f"Flood of {count} ({forgery_strategy}): {fragment.forgeries_accepted} accepted")
    return fragment


# ---------------------------------------------------------------------------
# Scenario runner
# ---------------------------------------------------------------------------

class ChannelSimulator:
    """Chạy một Scenario và ghi Transcript"""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.rng = random.Random(scenario.rng_seed)
        self.sim = DiscreteEventSimulator()
        self.transcript = Transcript(scenario=scenario.name, rng_seed=scenario.rng_seed)
        self.logger = logging.getLogger(__name__ + ".ChannelSimulator")

        self.admin = Administrator()
        self.gs = GroundStation()
        self.storage = MemoryStorage()
        # always drawn: the rng stream is the same with or without chain_seed
        seed = self.rng.getrandbits(8 * TOKEN_SIZE).to_bytes(TOKEN_SIZE, "big")
        if scenario.chain_seed is not None:
            seed = scenario.chain_seed
        self.chain_id, anchor = self.admin.provision(scenario.chain_length, seed=seed)
        self.chain = self.admin.get_chain(self.chain_id)
        self.cs = CubeSat.provision(self.chain_id, anchor, storage=self.storage)

        self.updates = self._resolve_updates()
        self.next_update = 0
        self.issued: Dict[int, UpdateBundle] = {}
        self.captured: List[UpdateBundle] = []
        self.script = deque(scenario.actions)
        self.budget = scenario.adversarial_actions if scenario.stochastic else 0
        self.slot = 0
        self.awaiting: Optional[int] = None
        self.genuine_done = False
        self._tx = 0
        self._delivery = 0

        self.sim.register_handler("ISSUE", self.handle_issue)
        self.sim.register_handler("DELIVER", self.handle_deliver)
        self.sim.register_handler("REPORT", self.handle_report)
        self.sim.register_handler("TIMEOUT", self.handle_timeout)
        self.sim.register_handler("IDLE_SLOT", self.handle_idle_slot)

    def _resolve_updates(self) -> List[SoftwareUpdatePackage]:
        updates = []
        for i, entry in enumerate(self.scenario.updates):
            if isinstance(entry, str):
                updates.append(SoftwareUpdatePackage(payload=entry.encode("utf-8"), name=entry))
            elif 'hex' in entry:
                updates.append(SoftwareUpdatePackage(payload=bytes.fromhex(entry['hex']),
                                                     name=entry.get('name', f"update-{i + 1}")))
            else:
                updates.append(SoftwareUpdatePackage(payload=self.rng.randbytes(entry['size']),
                                                     name=entry.get('name', f"update-{i + 1}")))
        return updates

    @property
    def now(self) -> int:
        return self.sim.current_time

    # -- adversary ---------------------------------------------------------

    def _captured(self, index: int) -> UpdateBundle:
        try:
            return self.captured[index]
        except IndexError:
            raise ConfigurationError(
                f"slot {self.slot}: capture index {index} out of range "
                f"({len(self.captured)} bundles observed)") from None

    def _random_action(self, kind: str) -> ChannelAction:
        rng = self.rng
        if not self.captured and kind in ("replay", "tamper", "swap_tt"):
            kind = "inject"

        if kind == "replay":
            return ChannelAction(kind, ref=rng.randrange(len(self.captured)))
        if kind == "tamper":
            base = rng.randrange(len(self.captured)) if rng.random() < 0.25 else None
            mutation = Mutation(target=rng.choice(TAMPER_TARGETS), bit=rng.randrange(1 << 20))
            return ChannelAction(kind, base=base, mutation=mutation)
        if kind == "swap_tt":
            base = rng.randrange(len(self.captured)) if rng.random() < 0.25 else None
            return ChannelAction(kind, ref=rng.randrange(len(self.captured)), base=base)
        if kind == "inject":
            return ChannelAction(kind, strategy=rng.choice(FORGERY_STRATEGIES))
        if kind == "flood":
            return ChannelAction(kind, count=rng.randint(2, 16), strategy=rng.choice(FORGERY_STRATEGIES))
        return ChannelAction(kind)

    def _next_action(self, idle: bool) -> Optional[ChannelAction]:
        """Next adversary decision, or None when the adversary has nothing left"""
        position = self.slot
        self.slot += 1

        if not self.scenario.stochastic:
            return self.script.popleft().at(position) if self.script else None

        if self.budget <= 0:
            return None
        kinds = [k for k in ACTION_KINDS if not (idle and k in ("deliver", "drop"))]
        weights = [self.scenario.rates.get(k, 0) for k in kinds]
        if sum(weights) <= 0:
            return None
        kind = self.rng.choices(kinds, weights=weights)[0]
        if kind != "deliver":
            self.budget -= 1
        return self._random_action(kind).at(position)

    def _deliver(self, bundle_or_bytes, origin: str, tx: Optional[int] = None):
        data = bundle_or_bytes if isinstance(bundle_or_bytes, bytes) else encode_bundle(bundle_or_bytes)
        delivery = self._delivery
        self._delivery += 1
        self.sim.schedule(LATENCY_TICKS, "DELIVER", data=data, origin=origin, tx=tx, delivery=delivery)

    def _inject(self, action: ChannelAction):
        """Adversary-originated deliveries (no GS transmission behind them)"""
        if action.kind == "replay":
            self._deliver(self._captured(action.ref), "replay")
        elif action.kind in ("inject", "flood"):
            count = action.count if action.kind == "flood" else 1
            for _ in range(count):
                self._deliver(forge_bundle(action.strategy, self.chain_id, self.rng, self.captured), "forged")
        elif action.kind in ("tamper", "swap_tt"):
            base = self._captured(action.base if action.base is not None else -1)
            self._deliver(self._modify(action, base), "tampered" if action.kind == "tamper" else "swapped")

    def _modify(self, action: ChannelAction, bundle: UpdateBundle) -> UpdateBundle:
        if action.kind == "tamper":
            return attack_tamper(bundle, action.mutation)
        return replace(bundle, tt=self._captured(action.ref).tt)

    def _record_action(self, action: ChannelAction, tx: Optional[int]):
        if action.kind != "deliver" and not (tx is None and action.kind == "drop"):
            self.transcript.adversarial_actions += 1
        detail = action.to_dict()
        detail['action'] = detail.pop('kind')
        self.transcript.record(self.now, "action", tx=tx, **detail)

    # -- genuine flow ------------------------------------------------------

    def _transmit(self, bundle: UpdateBundle, retransmission: bool):
        tx = self._tx
        self._tx += 1
        self.awaiting = tx

        self.gs.relay(bundle)
        self.captured.append(bundle)
        self.transcript.record(self.now, "transmit", tx=tx, ordinal=bundle.ordinal, retransmission=retransmission)

        action = self._next_action(idle=False) or ChannelAction("deliver", position=self.slot - 1)
        self._record_action(action, tx)

        if action.kind == "drop":
            self.sim.schedule(self.scenario.timeout_ticks, "TIMEOUT", tx=tx)
            return

        if action.kind in ("replay", "inject", "flood"):
            self._inject(action)
        elif action.kind in ("tamper", "swap_tt"):
            if action.base is not None:
                self._inject(action)
            else:
                modified = self._modify(action, bundle)
                origin = "genuine" if modified == bundle else ("tampered" if action.kind == "tamper" else "swapped")
                self._deliver(modified, origin, tx)
                return
        self._deliver(bundle, "genuine", tx)

    def handle_issue(self):
        if self.chain_id in self.admin.pending:
            return
        if self.next_update >= len(self.updates):
            if not self.genuine_done:
                self.genuine_done = True
                self.transcript.record(self.now, "genuine-complete", accepted=self.cs.state.accepted_count)
                self.sim.schedule(LATENCY_TICKS, "IDLE_SLOT")
            return

        sup = self.updates[self.next_update]
        self.next_update += 1
        bundle = self.admin.issue(self.chain_id, sup)
        self.issued[bundle.ordinal] = bundle
        self.transcript.record(self.now, "issue", ordinal=bundle.ordinal, name=sup.name, payload_len=sup.size)
        self._transmit(bundle, retransmission=False)

    def handle_idle_slot(self):
        action = self._next_action(idle=True)
        if action is None:
            return
        self._record_action(action, None)
        if action.kind not in ("deliver", "drop"):
            self._inject(action)
        self.sim.schedule(LATENCY_TICKS, "IDLE_SLOT")

    def handle_deliver(self, data: bytes, origin: str, tx: Optional[int], delivery: int):
        state_before = self.storage.data
        expected = self.issued.get(self.cs.state.accepted_count + 1)
        try:
            candidate = decode_bundle(data)
        except DecodeError:
            candidate = None
        genuine_content = (expected is not None and candidate is not None
                           and candidate.payload == expected.payload and candidate.tt == expected.tt)

        with counting_hashes() as counter:
            report = self.cs.handle(data)
        self.transcript.cs_hash_invocations += counter.count

        forgery = False
        if report.success:
            self.transcript.accepted += 1
            if not genuine_content:
                forgery = True
                self.transcript.forgeries_accepted += 1
                self.logger.error(f"Forged bundle accepted (delivery {delivery}, origin {origin})")
        else:
            reasons = self.transcript.rejected_by_reason
            reasons[report.reason] = reasons.get(report.reason, 0) + 1
            if self.storage.data != state_before:
                self.transcript.state_isolation_violations += 1
            if origin == "genuine" and genuine_content:
                self.transcript.genuine_rejected += 1

        self.transcript.record(
            self.now, "decision", delivery=delivery, origin=origin, tx=tx, accepted=report.success,
            reason=report.reason, hashes=counter.count, cs_ordinal=report.ordinal,
            bytes=len(data), forgery=forgery)
        self.sim.schedule(LATENCY_TICKS, "REPORT", report=report, tx=tx)

    def handle_report(self, report, tx: Optional[int]):
        self.gs.receive_report(report)
        self.transcript.record(self.now, "report", tx=tx, status=report.status,
                               message=report.message, ordinal=report.ordinal)

        if report.success and self.admin.acknowledge(self.chain_id, report):
            self.transcript.record(self.now, "ack", ordinal=report.ordinal)
            self.awaiting = None
            self.sim.schedule(LATENCY_TICKS, "ISSUE")
            return

        if tx is not None and tx == self.awaiting:
            bundle = self.admin.handle_report(self.chain_id, report)
            if bundle is not None:
                self.transcript.record(self.now, "nack", ordinal=bundle.ordinal)
                self._transmit(bundle, retransmission=True)

    def handle_timeout(self, tx: int):
        if tx != self.awaiting:
            return
        bundle = self.admin.retransmit(self.chain_id)
        self.transcript.record(self.now, "timeout", tx=tx)
        if bundle is not None:
            self._transmit(bundle, retransmission=True)

    # -- driver ------------------------------------------------------------

    def run(self) -> Transcript:
        self.sim.schedule(0, "ISSUE")
        drained = self.sim.run(self.scenario.max_events)
        if not drained:
            self.logger.warning(f"Scenario {self.scenario.name} stopped after {self.scenario.max_events} events")

        transcript = self.transcript
        transcript.completed = (drained and self.genuine_done
                                and self.cs.state.accepted_count == len(self.updates))
        transcript.final_token = self.cs.token
        try:
            transcript.final_token_index = self.chain.tokens.index(self.cs.token) + 1
        except ValueError:
            transcript.final_token_index = None
        transcript.record(self.now, "end", **transcript.summary())
        return transcript


def run_scenario(scenario: Scenario) -> Transcript:
    """
    Run one scenario.

    Raises:
        ConfigurationError: malformed scenario (including capture references
            that point past what the adversary has observed)
    """
    logger.info(f"Running scenario {scenario.name} (seed={scenario.rng_seed}, n={scenario.chain_length})")
    return ChannelSimulator(scenario).run()


def load_scenario(path: str, rng_seed: Optional[int] = None) -> Scenario:
    """Đọc scenario JSON, tùy chọn ghi đè rng_seed"""
    data = load_json_config(path)
    if rng_seed is not None:
        data['rng_seed'] = rng_seed
    return Scenario.from_dict(data)


def validate_scenario(data: Dict[str, Any]) -> Tuple[bool, str]:
    """
    Validate a scenario dictionary without running it

    Returns:
        (is_valid, error_message)
    """
    try:
        scenario = Scenario.from_dict(data)
    except ConfigurationError as e:
        return False, str(e)
    unknown = set(scenario.expect) - set(_EXPECT_KEYS)
    if unknown:
        return False, f"unknown expect keys: {sorted(unknown)}"
    return True, ""


def randomized_scenario(rng_seed: int, adversarial_actions: int = 100,
                        max_chain_length: int = 12, max_payload: int = 256) -> Scenario:
    """Scenario ngẫu nhiên: chain length, payloads và tỉ lệ tấn công lấy từ rng_seed"""
    rng = random.Random(rng_seed)
    chain_length = rng.randint(2, max_chain_length)
    updates = [{'size': rng.randint(0, max_payload)} for _ in range(rng.randint(1, chain_length - 1))]
    rates = {kind: rng.randint(1, 4) for kind in ACTION_KINDS}
    rates['deliver'] += 2
    return Scenario.from_dict({
        'name': f"randomized-{rng_seed}",
        'rng_seed': rng_seed,
        'chain_length': chain_length,
        'updates': updates,
        'rates': rates,
        'adversarial_actions': adversarial_actions,
    })


_EXPECT_KEYS = ("accepted", "rejected", "forgeries_accepted", "genuine_rejected", "completed",
                "final_token_index", "rejected_by_reason", "min_adversarial_actions",
                "cs_hash_invocations", "state_isolation_violations")


def check_expectations(scenario: Scenario, transcript: Transcript) -> List[Dict[str, Any]]:
    """
    Evaluate scenario assertions. Soundness, completeness and state isolation
    are always checked.

    Returns:
        list of {name, expected, actual, passed}
    """
    unknown = set(scenario.expect) - set(_EXPECT_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown expect keys: {sorted(unknown)}")

    summary = transcript.summary()
    results = []

    def check(name: str, expected: Any, actual: Any, passed: bool):
        results.append({'name': name, 'expected': expected, 'actual': actual, 'passed': passed})

    expect = dict(scenario.expect)
    expect.setdefault('forgeries_accepted', 0)
    expect.setdefault('genuine_rejected', 0)
    expect.setdefault('state_isolation_violations', 0)

    for key, expected in expect.items():
        if key == 'rejected_by_reason':
            for reason, count in expected.items():
                actual = transcript.rejected_by_reason.get(reason, 0)
                check(f"rejected_by_reason.{reason}", count, actual, actual == count)
        elif key == 'min_adversarial_actions':
            check(key, expected, transcript.adversarial_actions, transcript.adversarial_actions >= expected)
        else:
            check(key, expected, summary[key], summary[key] == expected)
    return results


def transcript_to_jsonl(transcript: Transcript) -> str:
    """Một dòng JSON cho mỗi sự kiện (sort_keys để tái lập byte-identical)"""
    lines = [json.dumps(event.to_dict(), sort_keys=True, separators=(",", ":"))
             for event in transcript.events]
    return "\n".join(lines) + "\n"
