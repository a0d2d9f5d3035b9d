"""Byzantine participants.

Byzantine nodes receive packets the moment they are sent (the adversary
sees all traffic) and may send anything under their own identity. The
simulator attributes every packet to its true sender, so they cannot forge
other participants' messages.
"""

from __future__ import annotations

from dataclasses import replace
from typing import TYPE_CHECKING, Callable

from ..broadcast import BroadcastEndpoint, RbKind, RbMessage, Send
from ..engine import Broadcast, engine_init
from ..protocol import Message, Phase

if TYPE_CHECKING:
    from .simulator import Simulation


class ByzantineNode:
    def __init__(self, sim: "Simulation", me: int) -> None:
        self.sim = sim
        self.me = me

    def start(self) -> list[Send]:
        return []

    def receive(self, msg: RbMessage) -> list[Send]:
        return []


class MuteNode(ByzantineNode):
    """Never sends anything, not even broadcast relays."""


def conflicting_sends(
    me: int, slot, variants: dict, recipients_of: Callable[[object], list[int]]
) -> list[Send]:
    """INITIAL, ECHO and READY for each variant payload, to that variant's recipients."""
    out: list[Send] = []
    for key, payload in variants.items():
        dsts = recipients_of(key)
        for kind in (RbKind.INITIAL, RbKind.ECHO, RbKind.READY):
            msg = RbMessage.make(kind, me, me, slot, payload)
            out.extend(Send(d, msg) for d in dsts)
    return out


class ShadowByzantine(ByzantineNode):
    """Tracks the protocol with a private engine so its lies carry real justifications.

    Relays other participants' broadcasts honestly; its own broadcasts are
    replaced by :meth:`transmit`.
    """

    def __init__(self, sim: "Simulation", me: int) -> None:
        super().__init__(sim, me)
        params = sim.config.params
        self.endpoint = BroadcastEndpoint(me, params)
        initial = sim.rng_bit(me)
        self.engine = engine_init(me, initial, params, sim.coin)

    def start(self) -> list[Send]:
        return self._act(self.engine.take_outbox())

    def receive(self, msg: RbMessage) -> list[Send]:
        sends, accepted = self.endpoint.receive(msg)
        if msg.origin == self.me:
            sends = []
        if accepted is not None:
            m = self.sim.decode(accepted)
            if m is not None and m.sender == msg.origin and m.slot == msg.slot:
                sends = sends + self._act(self.engine.deliver(m))
        return sends

    def _act(self, actions) -> list[Send]:
        out: list[Send] = []
        for a in actions:
            if isinstance(a, Broadcast):
                out.extend(self.transmit(a.message))
        return out

    def transmit(self, m: Message) -> list[Send]:
        raise NotImplementedError


def _flipped(m: Message) -> Message:
    if m.estimate is None:
        return replace(m, estimate=0)
    return replace(m, estimate=1 - m.estimate)


class EquivocatingNode(ShadowByzantine):
    """Sends both values in every slot, each to a fixed half of the participants."""

    def transmit(self, m: Message) -> list[Send]:
        n = self.sim.config.n
        halves = {0: list(range(n // 2)), 1: list(range(n // 2, n))}
        variants = {0: self.sim.register(m), 1: self.sim.register(_flipped(m))}
        return conflicting_sends(self.me, m.slot, variants, halves.__getitem__)


class SplitNode(ShadowByzantine):
    """Tells each honest participant whatever value it currently holds."""

    def transmit(self, m: Message) -> list[Send]:
        sides: dict[int, list[int]] = {0: [], 1: []}
        for p in range(self.sim.config.n):
            sides[self.sim.side_of(p)].append(p)
        variants = {b: self.sim.register(replace(m, estimate=b)) for b in (0, 1)}
        return conflicting_sends(self.me, m.slot, variants, sides.__getitem__)


class DualBroadcastNode(ByzantineNode):
    """Opens its step-0 vote with conflicting INITIALs, then only relays."""

    def __init__(self, sim: "Simulation", me: int) -> None:
        super().__init__(sim, me)
        self.endpoint = BroadcastEndpoint(me, sim.config.params)

    def start(self) -> list[Send]:
        n = self.sim.config.n
        halves = {0: list(range(n // 2)), 1: list(range(n // 2, n))}
        variants = {
            b: self.sim.register(Message(self.me, 0, Phase.VOTE, b, frozenset())) for b in (0, 1)
        }
        return conflicting_sends(self.me, (0, Phase.VOTE), variants, halves.__getitem__)

    def receive(self, msg: RbMessage) -> list[Send]:
        if msg.origin == self.me:
            return []
        sends, _ = self.endpoint.receive(msg)
        return sends

