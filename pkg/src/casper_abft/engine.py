"""One participant's consensus state machine.

Each step runs three reliably broadcast sub-steps:

* VOTE carries the current value ``x``; once n - t valid votes are in, the
  participant computes its estimate (strict majority, coin on a tie).
* AGGREGATE carries that estimate; a value with more than n/2 support
  becomes the confirmation, otherwise the confirmation is bottom.
* CONFIRM carries the confirmation; 2t+1 matching confirmations decide,
  t+1 adopt the value, anything less falls back to the coin.

The engine never touches the network. :meth:`Engine.deliver` takes a message
that reliable broadcast accepted and returns the actions it caused.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

from .protocol import (
    Estimate,
    FaultReport,
    InvariantViolation,
    Message,
    MessageId,
    MessageStore,
    Phase,
    ProtocolParams,
    identified_malicious,
    ready_to_send,
    score,
)
from .protocol import estimate as estimate_value


class CoinMode(Enum):
    LOCAL = "local"
    COMMON = "common"


@dataclass(frozen=True)
class CoinSource:
    """Deterministic coin: per (participant, step) when LOCAL, per step when COMMON."""

    mode: CoinMode
    seed: int

    def flip(self, participant: int, step: int) -> int:
        who = -1 if self.mode is CoinMode.COMMON else participant
        digest = hashlib.sha256(struct.pack(">4sQqQ", b"coin", self.seed & (2**64 - 1), who, step)).digest()
        return digest[0] & 1


@dataclass(frozen=True)
class Decision:
    value: int
    justification: frozenset
    decider: int
    step: int


@dataclass(frozen=True)
class Broadcast:
    message: Message


@dataclass(frozen=True)
class Decided:
    value: int
    step: int
    score: int
    via: Optional[int] = None  # sender of the decision message that convinced us


@dataclass(frozen=True)
class Flagged:
    who: int
    reason: str
    message: MessageId
    step: int
    phase: Phase


@dataclass(frozen=True)
class CoinFlipped:
    step: int
    value: int


@dataclass(frozen=True)
class SafetyAlarm:
    detail: str


Action = Union[Broadcast, Decided, Flagged, CoinFlipped, SafetyAlarm]


class Outcome(Enum):
    DECIDE = "decide"
    ADOPT = "adopt"
    COIN = "coin"


@dataclass
class Engine:
    me: int
    x: int
    params: ProtocolParams
    coin: CoinSource
    step: int = 0
    phase: Phase = Phase.VOTE
    buffers: dict = field(default_factory=dict)
    decided: Optional[Decision] = None
    outbox: list = field(default_factory=list)
    store: MessageStore = field(default_factory=MessageStore)
    _waiting: dict = field(default_factory=dict, repr=False)
    _parked: set = field(default_factory=set, repr=False)
    _flagged: set = field(default_factory=set, repr=False)

    # -- buffers ---------------------------------------------------------

    def buffer(self, step: Optional[int] = None, phase: Optional[Phase] = None) -> list[Message]:
        slot = (self.step if step is None else step, self.phase if phase is None else phase)
        return list(self.buffers.get(slot, {}).values())

    def _ids(self, slot) -> frozenset:
        return frozenset(self.buffers.get(slot, {}))

    def faults(self, step: Optional[int] = None, phase: Optional[Phase] = None) -> FaultReport:
        return identified_malicious(self.buffer(step, phase), self.store, self.params)

    # -- delivery --------------------------------------------------------

    def deliver(self, m: Message) -> list[Action]:
        """Absorb one message accepted by reliable broadcast."""
        actions = self.outbox
        self.outbox = []
        mid = self.store.add(m)
        if self.store.is_settled(mid, self.params) or mid in self._parked:
            return actions
        ready = [mid]
        while ready:
            cur = ready.pop()
            missing = [
                r
                for r in sorted(self.store[cur].justification)
                if not self.store.is_settled(r, self.params)
            ]
            if missing:
                # wait on the first unsettled reference; re-examined when it settles
                self._waiting.setdefault(missing[0], []).append(cur)
                self._parked.add(cur)
                continue
            self._parked.discard(cur)
            self._settle(cur, actions)
            ready.extend(reversed(self._waiting.pop(cur, [])))
        return actions

    def take_outbox(self) -> list[Action]:
        out, self.outbox = self.outbox, []
        return out

    def _settle(self, mid: MessageId, actions: list) -> None:
        m = self.store[mid]
        reason = self.store.verdict(mid, self.params)
        if reason is not None:
            self._flag(m, reason, actions)
        if m.phase == Phase.DECIDE:
            self.handle_decision(m, actions)
            return
        if self.decided is not None:
            return
        if self.store.structural(mid, self.params) is not None:
            return
        if m.slot < (self.step, self.phase):
            return  # stale: the slot has already been concluded
        self.buffers.setdefault(m.slot, {})[mid] = m
        self._advance(actions)

    def _flag(self, m: Message, reason: str, actions: list) -> None:
        key = (m.sender, m.id)
        if key in self._flagged:
            return
        self._flagged.add(key)
        actions.append(Flagged(m.sender, reason, m.id, m.step, m.phase))

    def _advance(self, actions: list) -> None:
        while self.decided is None and ready_to_send(self.buffer(), self.store, self.params):
            if self.phase == Phase.VOTE:
                e = self.phase1_conclude(actions)
                self._broadcast(Phase.AGGREGATE, e, actions)
            elif self.phase == Phase.AGGREGATE:
                e = self.phase2_conclude()
                self._broadcast(Phase.CONFIRM, e, actions)
            else:
                self.phase3_conclude(actions)

    def _broadcast(self, phase: Phase, value: Estimate, actions: list) -> None:
        just = self._ids((self.step, self.phase))
        actions.append(Broadcast(Message(self.me, self.step, phase, value, just)))
        if phase != Phase.DECIDE:
            self.phase = phase

    def _coin(self, actions: list) -> int:
        value = self.coin.flip(self.me, self.step)
        actions.append(CoinFlipped(self.step, value))
        return value

    # -- phase conclusions ----------------------------------------------

    def phase1_conclude(self, actions: Optional[list] = None) -> int:
        """Estimate from the VOTE buffer; the coin is drawn only on a tie."""
        sink = [] if actions is None else actions
        buf = self.buffer(self.step, Phase.VOTE)
        return estimate_value(buf, self.faults(self.step, Phase.VOTE), lambda: self._coin(sink))

    def phase2_conclude(self) -> Estimate:
        buf = self.buffer(self.step, Phase.AGGREGATE)
        fault = self.faults(self.step, Phase.AGGREGATE)
        for b in (0, 1):
            if 2 * score(b, buf, fault) > self.params.n:
                return b
        return None

    def phase3_conclude(self, actions: Optional[list] = None) -> tuple[Outcome, int]:
        sink = [] if actions is None else actions
        buf = self.buffer(self.step, Phase.CONFIRM)
        fault = self.faults(self.step, Phase.CONFIRM)
        counts = (score(0, buf, fault), score(1, buf, fault))
        t = self.params.t
        if counts[0] >= t + 1 and counts[1] >= t + 1:
            raise InvariantViolation(
                f"participant {self.me} step {self.step}: both values confirmed by t+1 ({counts})"
            )
        for b in (0, 1):
            if counts[b] >= 2 * t + 1:
                just = self._ids((self.step, Phase.CONFIRM))
                self.decided = Decision(b, just, self.me, self.step)
                sink.append(Broadcast(Message(self.me, self.step, Phase.DECIDE, b, just)))
                sink.append(Decided(b, self.step, counts[b]))
                return Outcome.DECIDE, b
        outcome = Outcome.COIN
        for b in (0, 1):
            if counts[b] >= t + 1:
                self.x, outcome = b, Outcome.ADOPT
                break
        else:
            self.x = self._coin(sink)
        just = self._ids((self.step, Phase.CONFIRM))
        self.step += 1
        self.phase = Phase.VOTE
        self.buffers = {s: b for s, b in self.buffers.items() if s >= (self.step, Phase.VOTE)}
        sink.append(Broadcast(Message(self.me, self.step, Phase.VOTE, self.x, just)))
        return outcome, self.x

    # -- decisions -------------------------------------------------------

    def handle_decision(self, m: Message, actions: Optional[list] = None) -> None:
        """Adopt a peer's justified decision, whatever step we are at."""
        sink = [] if actions is None else actions
        if self.store.verdict(m.id, self.params) is not None:
            self._flag(m, self.store.verdict(m.id, self.params), sink)
            return
        if self.decided is not None:
            if self.decided.value != m.estimate:
                sink.append(
                    SafetyAlarm(
                        f"participant {self.me} decided {self.decided.value} "
                        f"but {m.sender} justified {m.estimate}"
                    )
                )
            return
        cited = self.store.resolve(m.justification)
        support = score(m.estimate, cited, identified_malicious(cited, self.store, self.params))
        self.decided = Decision(m.estimate, m.justification, self.me, self.step)
        sink.append(Decided(m.estimate, self.step, support, via=m.sender))


def engine_init(me: int, initial: int, params: ProtocolParams, coin: CoinSource) -> Engine:
    if initial not in (0, 1):
        raise ValueError(f"initial value must be 0 or 1, got {initial!r}")
    engine = Engine(me, initial, params, coin)
    engine.outbox.append(Broadcast(Message(me, 0, Phase.VOTE, initial, frozenset())))
    return engine


def engine_deliver(engine: Engine, m: Message) -> tuple[Engine, list[Action]]:
    return engine, engine.deliver(m)
