"""Message algebra for binary CBC Casper with fault sets and the waiting rule.

Messages are immutable values identified by the SHA-256 digest of their
canonical serialization. A message cites the buffer it was computed from by
listing digests, so the dependency DAG lives in a :class:`MessageStore`
rather than in nested message sets.

Every function here is pure: verdicts cached in a store depend only on the
message DAG, never on the order in which messages were added.
"""

from __future__ import annotations

import hashlib
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Callable, Iterable, Mapping, Optional, Union

MessageId = bytes
Estimate = Optional[int]  # 0, 1, or None for the bottom value

BOTTOM: Estimate = None


class Phase(IntEnum):
    VOTE = 1
    AGGREGATE = 2
    CONFIRM = 3
    DECIDE = 4


Slot = tuple  # (step, Phase)


# structural rejection reasons
DANGLING = "dangling-reference"
WRONG_SLOT = "wrong-slot"
ILLEGAL_ESTIMATE = "illegal-estimate-domain"
NONEMPTY_GENESIS = "nonempty-step-0-justification"
EMPTY_JUSTIFICATION = "empty-justification"
UNKNOWN_SENDER = "unknown-sender"
INVALID_JUSTIFICATION = "invalid-justification"

# protocol violations (membership in F)
UNRESOLVABLE = "unresolvable justification"
SHORT_JUSTIFICATION = "insufficient-justification"
AGAINST_MAJORITY = "estimate-against-majority"
CONFIRM_WITHOUT_MAJORITY = "confirm-without-majority"
BOTTOM_DESPITE_MAJORITY = "bottom-despite-majority"
DECIDE_WITHOUT_QUORUM = "decision-without-quorum"
IGNORED_ADOPTION = "ignored-adoption"
VOTE_AFTER_DECISIVE = "vote-despite-decisive-confirm"

STRUCTURAL_REASONS = frozenset(
    {
        DANGLING,
        WRONG_SLOT,
        ILLEGAL_ESTIMATE,
        NONEMPTY_GENESIS,
        EMPTY_JUSTIFICATION,
        UNKNOWN_SENDER,
        INVALID_JUSTIFICATION,
    }
)


class DanglingReference(KeyError):
    """A message id that does not resolve in the store."""


class InvariantViolation(RuntimeError):
    """An internal protocol invariant was broken; the run must abort."""


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    t: int

    def __post_init__(self) -> None:
        if self.t < 0 or self.n <= 3 * self.t:
            raise ValueError(f"need n > 3t, got n={self.n} t={self.t}")

    @classmethod
    def for_n(cls, n: int) -> "ProtocolParams":
        return cls(n, (n - 1) // 3)

    @property
    def quorum(self) -> int:
        return self.n - self.t


def preceding_slot(step: int, phase: Phase) -> Optional[Slot]:
    """The slot a message in (step, phase) must cite, or None for step-0 votes."""
    if phase == Phase.VOTE:
        return None if step == 0 else (step - 1, Phase.CONFIRM)
    if phase == Phase.DECIDE:
        return (step, Phase.CONFIRM)
    return (step, Phase(phase - 1))


# -- canonical serialization -------------------------------------------------

_MAGIC = b"CBCM"
_EST_CODE = {0: 0, 1: 1, None: 2}
_EST_DECODE = {0: 0, 1: 1, 2: None}


def _field(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def serialize(m: "Message") -> bytes:
    """Canonical bytes: sender, step, phase, estimate, sorted justification.

    Each field is prefixed with its big-endian u32 length, so the encoding is
    byte-exact across platforms.
    """
    refs = sorted(m.justification)
    body = [
        _field(struct.pack(">I", m.sender)),
        _field(struct.pack(">Q", m.step)),
        _field(struct.pack(">B", int(m.phase))),
        _field(struct.pack(">B", _EST_CODE[m.estimate])),
        _field(struct.pack(">I", len(refs)) + b"".join(_field(r) for r in refs)),
    ]
    return _MAGIC + b"".join(body)


def deserialize(data: bytes) -> "Message":
    if not data.startswith(_MAGIC):
        raise ValueError("not a serialized message")
    pos = len(_MAGIC)
    fields = []
    for _ in range(5):
        (size,) = struct.unpack_from(">I", data, pos)
        pos += 4
        fields.append(data[pos : pos + size])
        pos += size
    if pos != len(data):
        raise ValueError("trailing bytes after message")
    (sender,) = struct.unpack(">I", fields[0])
    (step,) = struct.unpack(">Q", fields[1])
    (phase,) = struct.unpack(">B", fields[2])
    (est,) = struct.unpack(">B", fields[3])
    refs_blob = fields[4]
    (count,) = struct.unpack_from(">I", refs_blob, 0)
    off = 4
    refs = []
    for _ in range(count):
        (size,) = struct.unpack_from(">I", refs_blob, off)
        off += 4
        refs.append(refs_blob[off : off + size])
        off += size
    if est not in _EST_DECODE:
        raise ValueError(f"bad estimate code {est}")
    return Message(sender, step, Phase(phase), _EST_DECODE[est], frozenset(refs))


@dataclass(frozen=True)
class Message:
    sender: int
    step: int
    phase: Phase
    estimate: Estimate
    justification: frozenset = field(default_factory=frozenset)

    @cached_property
    def id(self) -> MessageId:
        return message_digest(self)

    @property
    def slot(self) -> Slot:
        return (self.step, self.phase)

    def short(self) -> str:
        return self.id.hex()[:16]


def message_digest(m: Message) -> MessageId:
    return hashlib.sha256(serialize(m)).digest()


def render_estimate(e: Estimate) -> str:
    return "⊥" if e is None else str(e)


# -- store -------------------------------------------------------------------


class MessageStore:
    """Append-only content-addressed message store with cached verdicts.

    The verdict caches are keyed by ``ProtocolParams`` because fault
    thresholds depend on them. Dangling references are never cached, since
    the missing message may still arrive.
    """

    def __init__(self, messages: Iterable[Message] = ()) -> None:
        self._messages: dict[MessageId, Message] = {}
        self._structural: dict[ProtocolParams, dict[MessageId, Optional[str]]] = defaultdict(dict)
        self._verdicts: dict[ProtocolParams, dict[MessageId, Optional[str]]] = defaultdict(dict)
        for m in messages:
            self.add(m)

    def add(self, m: Message) -> MessageId:
        mid = m.id
        self._messages.setdefault(mid, m)
        return mid

    def __contains__(self, mid: object) -> bool:
        return mid in self._messages

    def __getitem__(self, mid: MessageId) -> Message:
        try:
            return self._messages[mid]
        except KeyError:
            raise DanglingReference(mid.hex()[:16]) from None

    def get(self, mid: MessageId) -> Optional[Message]:
        return self._messages.get(mid)

    def __len__(self) -> int:
        return len(self._messages)

    def __iter__(self):
        return iter(self._messages.values())

    def resolve(self, ids: Iterable[MessageId]) -> list[Message]:
        return [self[i] for i in ids]

    def is_settled(self, mid: MessageId, params: ProtocolParams) -> bool:
        return mid in self._verdicts[params]

    def structural(self, mid: MessageId, params: ProtocolParams) -> Optional[str]:
        self._settle(mid, params)
        cache = self._structural[params]
        if mid in cache:
            return cache[mid]
        return DANGLING

    def verdict(self, mid: MessageId, params: ProtocolParams) -> Optional[str]:
        """Rejection reason for a stored message, or None when it is valid."""
        self._settle(mid, params)
        cache = self._verdicts[params]
        if mid in cache:
            return cache[mid]
        return UNRESOLVABLE if mid in self._messages else DANGLING

    def _settle(self, root: MessageId, params: ProtocolParams) -> None:
        # Iterative post-order walk; runs can be thousands of slots deep.
        verdicts = self._verdicts[params]
        structural = self._structural[params]
        if root in verdicts:
            return
        stack = [root]
        blocked: set[MessageId] = set()
        while stack:
            mid = stack[-1]
            if mid in verdicts or mid in blocked:
                stack.pop()
                continue
            m = self._messages.get(mid)
            if m is None:
                blocked.add(mid)
                stack.pop()
                continue
            todo = [r for r in m.justification if r not in verdicts]
            if any(r in blocked for r in todo):
                blocked.add(mid)
                stack.pop()
                continue
            if todo:
                stack.extend(sorted(todo))
                continue
            stack.pop()
            reason = _structural_reason(m, self, params)
            structural[mid] = reason
            verdicts[mid] = reason if reason is not None else _semantic_reason(m, self, params)


# -- validation --------------------------------------------------------------


def _structural_reason(m: Message, store: MessageStore, params: ProtocolParams) -> Optional[str]:
    if not 0 <= m.sender < params.n:
        return UNKNOWN_SENDER
    if m.phase == Phase.CONFIRM:
        if m.estimate not in (0, 1, None):
            return ILLEGAL_ESTIMATE
    elif m.estimate not in (0, 1):
        return ILLEGAL_ESTIMATE
    want = preceding_slot(m.step, m.phase)
    if want is None:
        return NONEMPTY_GENESIS if m.justification else None
    if not m.justification:
        return EMPTY_JUSTIFICATION
    cache = store._structural[params]
    for ref in m.justification:
        cited = store.get(ref)
        if cited is None:
            return DANGLING
        if cited.slot != want:
            return WRONG_SLOT
        if ref in cache and cache[ref] is not None:
            return INVALID_JUSTIFICATION
    return None


def _semantic_reason(m: Message, store: MessageStore, params: ProtocolParams) -> Optional[str]:
    if not m.justification:
        return None
    cited = store.resolve(m.justification)
    fault = identified_malicious(cited, store, params)
    if not _enough_senders(cited, fault, store, params):
        return SHORT_JUSTIFICATION
    s0 = score(0, cited, fault)
    s1 = score(1, cited, fault)
    if m.phase == Phase.AGGREGATE:
        if (m.estimate == 0 and s1 > s0) or (m.estimate == 1 and s0 > s1):
            return AGAINST_MAJORITY
    elif m.phase == Phase.CONFIRM:
        if m.estimate is None:
            if 2 * s0 > params.n or 2 * s1 > params.n:
                return BOTTOM_DESPITE_MAJORITY
        elif 2 * (s0, s1)[m.estimate] <= params.n:
            return CONFIRM_WITHOUT_MAJORITY
    elif m.phase == Phase.DECIDE:
        if (s0, s1)[m.estimate] < 2 * params.t + 1:
            return DECIDE_WITHOUT_QUORUM
    elif m.phase == Phase.VOTE:
        for b, c in ((0, s0), (1, s1)):
            if c >= 2 * params.t + 1:
                return VOTE_AFTER_DECISIVE
            if c >= params.t + 1 and m.estimate != b:
                return IGNORED_ADOPTION
    return None


def structural_validate(m: Message, store: MessageStore, params: ProtocolParams) -> Optional[str]:
    """None if ``m`` has a legal shape, else the reason it does not.

    Checks the estimate domain, the empty step-0 justification, and that every
    cited message resolves, sits in the immediately preceding slot and is
    itself structurally valid.
    """
    for ref in m.justification:
        if ref not in store:
            return DANGLING
        store._settle(ref, params)
        if not store.is_settled(ref, params):
            return DANGLING
    return _structural_reason(m, store, params)


def _by_sender(m_set: Iterable[Message]) -> dict[int, list[Message]]:
    out: dict[int, list[Message]] = defaultdict(list)
    seen: set[MessageId] = set()
    for m in m_set:
        if m.id in seen:
            continue
        seen.add(m.id)
        out[m.sender].append(m)
    return out


def depends_on(a: MessageId, b: MessageId, store: MessageStore) -> bool:
    """True iff ``a`` is reachable from ``b`` through justification edges."""
    store[a]
    frontier = list(store[b].justification)
    seen: set[MessageId] = set()
    while frontier:
        mid = frontier.pop()
        if mid == a:
            return True
        if mid in seen:
            continue
        seen.add(mid)
        frontier.extend(store[mid].justification)
    return False


def latest_message(p: int, m_set: Iterable[Message]) -> list[Message]:
    """All messages by ``p`` in a single-slot buffer.

    Zero means absent, one is the latest message, two or more is
    equivocation evidence.
    """
    found = {m.id: m for m in m_set if m.sender == p}
    return [found[k] for k in sorted(found)]


def equivocators(m_set: Iterable[Message]) -> frozenset:
    slots: dict[tuple, set[MessageId]] = defaultdict(set)
    for m in m_set:
        slots[(m.sender, m.step, m.phase)].add(m.id)
    return frozenset(sender for (sender, _, _), ids in slots.items() if len(ids) > 1)


def protocol_violators(
    m_set: Iterable[Message], store: MessageStore, params: ProtocolParams
) -> dict[int, str]:
    """Senders in ``m_set`` whose message fails validation, with the reason."""
    flagged: dict[int, str] = {}
    for m in sorted(set(m_set), key=lambda m: m.id):
        reason = store.verdict(m.id, params) if m.id in store else _detached_reason(m, store, params)
        if reason is not None and m.sender not in flagged:
            flagged[m.sender] = reason
    return flagged


def _detached_reason(m: Message, store: MessageStore, params: ProtocolParams) -> Optional[str]:
    if any(ref not in store for ref in m.justification):
        return UNRESOLVABLE
    for ref in m.justification:
        store._settle(ref, params)
        if not store.is_settled(ref, params):
            return UNRESOLVABLE
    return _structural_reason(m, store, params) or _semantic_reason(m, store, params)


@dataclass(frozen=True)
class FaultReport:
    equivocators: frozenset = frozenset()
    violators: Mapping[int, str] = field(default_factory=dict)
    combined: frozenset = frozenset()

    @classmethod
    def of(cls, equivocating: Iterable[int], violating: Mapping[int, str]) -> "FaultReport":
        eq = frozenset(equivocating)
        return cls(eq, dict(violating), eq | frozenset(violating))


NO_FAULTS = FaultReport()


def identified_malicious(
    m_set: Iterable[Message], store: MessageStore, params: ProtocolParams
) -> FaultReport:
    m_list = list(m_set)
    return FaultReport.of(equivocators(m_list), protocol_violators(m_list, store, params))


def score(b: int, m_set: Iterable[Message], fault: FaultReport = NO_FAULTS) -> int:
    """Number of unflagged senders whose unique message in the buffer carries ``b``."""
    total = 0
    for sender, msgs in _by_sender(m_set).items():
        if sender in fault.combined or len(msgs) != 1:
            continue
        if msgs[0].estimate == b:
            total += 1
    return total


def estimate(
    m_set: Iterable[Message], fault: FaultReport, coin: Union[int, Callable[[], int]]
) -> int:
    """Strict-majority estimate with the coin deciding ties.

    ``coin`` may be a zero-argument callable; it is only called on a tie.
    """
    m_list = list(m_set)
    s0 = score(0, m_list, fault)
    s1 = score(1, m_list, fault)
    if s0 > s1:
        return 0
    if s1 > s0:
        return 1
    return coin() if callable(coin) else coin


def _enough_senders(
    m_set: list[Message], fault: FaultReport, store: MessageStore, params: ProtocolParams
) -> bool:
    good = set()
    for m in m_set:
        if m.sender in fault.combined or m.sender in good:
            continue
        if m.id in store and store.structural(m.id, params) is None:
            good.add(m.sender)
    return len(good) >= params.quorum


def ready_to_send(m_set: Iterable[Message], store: MessageStore, params: ProtocolParams) -> bool:
    """Waiting rule: at least n - t valid senders outside the identified-malicious set."""
    m_list = list(m_set)
    if len(m_list) < params.quorum:
        return False
    fault = identified_malicious(m_list, store, params)
    return _enough_senders(m_list, fault, store, params)
