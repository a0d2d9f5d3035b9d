"""Unrevised binary CBC Casper participant, kept only to replay the liveness attack.

Differences from :mod:`casper_abft.engine`: no reliable broadcast, one message
per step instead of three sub-steps, and equivocation is the only fault it
recognizes. It moves on after n - t messages for its current step, whichever
ones the network chose to deliver first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .engine import Broadcast, CoinFlipped, CoinSource, Decided, Decision
from .protocol import FaultReport, Message, Phase, ProtocolParams, equivocators, score
from .protocol import estimate as estimate_value


@dataclass
class LegacyEngine:
    me: int
    x: int
    params: ProtocolParams
    coin: CoinSource
    step: int = 0
    buffers: dict = field(default_factory=dict)
    decided: Optional[Decision] = None

    def start(self) -> list:
        return [Broadcast(Message(self.me, 0, Phase.VOTE, self.x, frozenset()))]

    def deliver(self, m: Message) -> list:
        if self.decided is not None or m.step < self.step or m.phase != Phase.VOTE:
            return []
        self.buffers.setdefault(m.step, {})[m.id] = m
        actions: list = []
        while self.decided is None and len(self.buffers.get(self.step, ())) >= self.params.quorum:
            self._conclude(actions)
        return actions

    def _conclude(self, actions: list) -> None:
        buf = list(self.buffers.pop(self.step).values())
        fault = FaultReport.of(equivocators(buf), {})
        ids = frozenset(m.id for m in buf)
        for b in (0, 1):
            c = score(b, buf, fault)
            if c >= 2 * self.params.t + 1:
                self.decided = Decision(b, ids, self.me, self.step)
                actions.append(Decided(b, self.step, c))
                return

        def flip() -> int:
            value = self.coin.flip(self.me, self.step)
            actions.append(CoinFlipped(self.step, value))
            return value

        self.x = estimate_value(buf, fault, flip)
        self.step += 1
        actions.append(Broadcast(Message(self.me, self.step, Phase.VOTE, self.x, ids)))
