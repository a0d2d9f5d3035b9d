"""Bracha reliable broadcast, one state machine per (origin, slot) instance."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Optional

from .protocol import Phase, ProtocolParams, Slot


class RbKind(IntEnum):
    INITIAL = 0
    ECHO = 1
    READY = 2


class RbMessage(NamedTuple):
    kind: RbKind
    origin: int
    relayer: int
    slot: Slot
    payload: bytes
    payload_id: bytes

    @classmethod
    def make(cls, kind: RbKind, origin: int, relayer: int, slot: Slot, payload: bytes) -> "RbMessage":
        return cls(kind, origin, relayer, slot, payload, hashlib.sha256(payload).digest())

    def relay(self, kind: RbKind, relayer: int) -> "RbMessage":
        return self._replace(kind=kind, relayer=relayer)


class Send(NamedTuple):
    dst: int
    msg: RbMessage


def serialize_rb(msg: RbMessage) -> bytes:
    """(kind, origin, relayer, slot, payload digest, payload), length-prefixed."""
    step, phase = msg.slot
    parts = [
        struct.pack(">B", int(msg.kind)),
        struct.pack(">I", msg.origin),
        struct.pack(">I", msg.relayer),
        struct.pack(">QB", step, int(phase)),
        msg.payload_id,
        msg.payload,
    ]
    return b"RBM1" + b"".join(struct.pack(">I", len(p)) + p for p in parts)


def deserialize_rb(data: bytes) -> RbMessage:
    if not data.startswith(b"RBM1"):
        raise ValueError("not a serialized broadcast message")
    pos = 4
    parts = []
    while pos < len(data):
        (size,) = struct.unpack_from(">I", data, pos)
        pos += 4
        parts.append(data[pos : pos + size])
        pos += size
    if len(parts) != 6:
        raise ValueError("malformed broadcast message")
    (kind,) = struct.unpack(">B", parts[0])
    (origin,) = struct.unpack(">I", parts[1])
    (relayer,) = struct.unpack(">I", parts[2])
    step, phase = struct.unpack(">QB", parts[3])
    msg = RbMessage(RbKind(kind), origin, relayer, (step, Phase(phase)), parts[5], parts[4])
    if hashlib.sha256(msg.payload).digest() != msg.payload_id:
        raise ValueError("payload digest mismatch")
    return msg


class DuplicateBroadcast(RuntimeError):
    pass


class InstanceMismatch(ValueError):
    pass


def to_all(msg: RbMessage, n: int) -> list[Send]:
    return [Send(dst, msg) for dst in range(n)]


def rb_start(me: int, slot: Slot, payload: bytes, params: ProtocolParams) -> list[Send]:
    """INITIAL for ``payload`` addressed to every participant.

    No one-shot guard here; :class:`BroadcastEndpoint.start` enforces it for
    honest participants, and adversaries call this directly.
    """
    return to_all(RbMessage.make(RbKind.INITIAL, me, me, slot, payload), params.n)


@dataclass
class RbInstanceState:
    owner: int
    origin: int
    slot: Slot
    initial_seen: bool = False
    echoed: bool = False
    readied: bool = False
    echo_senders: dict = field(default_factory=dict)
    ready_senders: dict = field(default_factory=dict)
    echo_from: set = field(default_factory=set)
    ready_from: set = field(default_factory=set)
    accepted: Optional[bytes] = None
    ready_payload: Optional[bytes] = None


def rb_step(
    state: RbInstanceState, msg: RbMessage, params: ProtocolParams
) -> tuple[RbInstanceState, list[Send], Optional[bytes]]:
    """Apply one delivery; returns the state, broadcasts to emit, and a newly accepted payload."""
    if msg.origin != state.origin or msg.slot != state.slot:
        raise InstanceMismatch(f"message for {msg.origin}/{msg.slot} given to {state.origin}/{state.slot}")
    n, t = params.n, params.t
    out: list[Send] = []
    accepted = None
    echo_v = ready_v = None

    if msg.kind == RbKind.INITIAL:
        if msg.relayer != state.origin or state.initial_seen:
            return state, out, None
        state.initial_seen = True
        echo_v = msg
    elif msg.kind == RbKind.ECHO:
        if msg.relayer in state.echo_from:
            return state, out, None
        state.echo_from.add(msg.relayer)
        senders = state.echo_senders.setdefault(msg.payload, set())
        senders.add(msg.relayer)
        # strictly more than (n + t) / 2
        if 2 * len(senders) > n + t:
            echo_v = ready_v = msg
    else:
        if msg.relayer in state.ready_from:
            return state, out, None
        state.ready_from.add(msg.relayer)
        senders = state.ready_senders.setdefault(msg.payload, set())
        senders.add(msg.relayer)
        if len(senders) >= t + 1:
            echo_v = ready_v = msg
        if len(senders) >= 2 * t + 1 and state.accepted is None:
            state.accepted = msg.payload
            accepted = msg.payload

    if echo_v is not None and not state.echoed:
        state.echoed = True
        out.extend(to_all(echo_v.relay(RbKind.ECHO, state.owner), n))
    if ready_v is not None and not state.readied:
        state.readied = True
        state.ready_payload = ready_v.payload
        out.extend(to_all(ready_v.relay(RbKind.READY, state.owner), n))
    return state, out, accepted


class BroadcastEndpoint:
    """All broadcast instances one participant takes part in."""

    def __init__(self, me: int, params: ProtocolParams) -> None:
        self.me = me
        self.params = params
        self.instances: dict[tuple, RbInstanceState] = {}
        self._started: set = set()

    def start(self, slot: Slot, payload: bytes) -> list[Send]:
        if slot in self._started:
            raise DuplicateBroadcast(f"participant {self.me} already broadcast in slot {slot}")
        self._started.add(slot)
        return rb_start(self.me, slot, payload, self.params)

    def instance(self, origin: int, slot: Slot) -> RbInstanceState:
        key = (origin, slot)
        state = self.instances.get(key)
        if state is None:
            state = self.instances[key] = RbInstanceState(self.me, origin, slot)
        return state

    def receive(self, msg: RbMessage) -> tuple[list[Send], Optional[bytes]]:
        state = self.instance(msg.origin, msg.slot)
        _, out, accepted = rb_step(state, msg, self.params)
        return out, accepted
