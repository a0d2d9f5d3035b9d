"""In-flight packets and the adversarial delivery schedulers."""

from __future__ import annotations

import random
from collections import deque
from typing import Any, Callable, Optional


class Packet:
    __slots__ = ("src", "dst", "msg", "sent_at", "pos", "done", "est", "step")

    def __init__(self, src: int, dst: int, msg: Any, sent_at: int, est, step: int) -> None:
        self.src = src
        self.dst = dst
        self.msg = msg
        self.sent_at = sent_at
        self.pos = -1
        self.done = False
        self.est = est
        self.step = step


class Network:
    """Pending packets with O(1) random removal and oldest-first lookup."""

    def __init__(self) -> None:
        self.pending: list[Packet] = []
        self._fifo: deque[Packet] = deque()
        self.clock = 0  # deliveries performed so far

    def __len__(self) -> int:
        return len(self.pending)

    def push(self, pkt: Packet) -> None:
        pkt.pos = len(self.pending)
        self.pending.append(pkt)
        self._fifo.append(pkt)

    def remove(self, pkt: Packet) -> Packet:
        last = self.pending.pop()
        if last is not pkt:
            self.pending[pkt.pos] = last
            last.pos = pkt.pos
        pkt.done = True
        self.clock += 1
        return pkt

    def oldest(self) -> Optional[Packet]:
        while self._fifo and self._fifo[0].done:
            self._fifo.popleft()
        return self._fifo[0] if self._fifo else None


def deferral_cap(n: int) -> int:
    """Deliveries a packet may be passed over before it is forced through."""
    return 40 * n * n


class Scheduler:
    """Chooses the next packet; never starves one beyond ``cap`` deliveries."""

    def __init__(self, rng: random.Random, cap: Optional[int]) -> None:
        self.rng = rng
        self.cap = cap

    def pick(self, net: Network) -> Packet:
        if self.cap is not None:
            oldest = net.oldest()
            if oldest is not None and net.clock - oldest.sent_at > self.cap:
                return oldest
        return self.choose(net)

    def choose(self, net: Network) -> Packet:
        return net.pending[self.rng.randrange(len(net.pending))]


class RandomScheduler(Scheduler):
    pass


class PreferenceScheduler(Scheduler):
    """Random choice biased towards packets for which ``prefer`` holds.

    Rejection sampling keeps each pick O(1); after ``tries`` misses the last
    sample is taken anyway.
    """

    tries = 6

    def __init__(self, rng: random.Random, cap: Optional[int], prefer: Callable[[Packet], bool]) -> None:
        super().__init__(rng, cap)
        self.prefer = prefer

    def choose(self, net: Network) -> Packet:
        pending = net.pending
        pkt = pending[self.rng.randrange(len(pending))]
        for _ in range(self.tries):
            if self.prefer(pkt):
                return pkt
            pkt = pending[self.rng.randrange(len(pending))]
        return pkt


class ReorderScheduler(PreferenceScheduler):
    """Holds back everything sent by a rotating set of slow participants."""

    def __init__(self, rng: random.Random, cap: Optional[int], n: int, slow: int, period: int) -> None:
        super().__init__(rng, cap, self._fast)
        self.n = n
        self.slow_count = slow
        self.period = period
        self._slow: frozenset = frozenset()
        self._next_draw = 0

    def _fast(self, pkt: Packet) -> bool:
        return pkt.src not in self._slow

    def pick(self, net: Network) -> Packet:
        if net.clock >= self._next_draw:
            self._slow = frozenset(self.rng.sample(range(self.n), self.slow_count))
            self._next_draw = net.clock + self.period
        return super().pick(net)


class LegacySplitNetwork:
    """Pending legacy votes indexed by (receiver, step), for the partition attack.

    Each honest receiver is fed its own side's votes first, then the other
    side's, and moves on after n - t; what is left for that step is never
    delivered.
    """

    def __init__(self, rng: random.Random, quorum: int) -> None:
        self.rng = rng
        self.by_slot: dict[tuple, list[Packet]] = {}
        self.crossed: dict[tuple, int] = {}
        # strictly fewer cross-side votes than same-side ones in every quorum
        self.cross_quota = (quorum - 1) // 2
        self.clock = 0
        self.count = 0

    def __len__(self) -> int:
        return self.count

    def push(self, pkt: Packet) -> None:
        self.by_slot.setdefault((pkt.dst, pkt.step), []).append(pkt)
        self.count += 1

    def pick(self, receivers: list[int], step_of: Callable[[int], int], side_of: Callable[[int], int]) -> Optional[Packet]:
        order = list(receivers)
        self.rng.shuffle(order)
        for r in order:
            key = (r, step_of(r))
            cands = self.by_slot.get(key)
            if not cands:
                continue
            side = side_of(r)
            pool = [p for p in cands if p.est == side]
            crossing = not pool
            if crossing:
                if self.crossed.get(key, 0) >= self.cross_quota:
                    continue
                pool = cands
            pkt = pool[self.rng.randrange(len(pool))]
            if crossing:
                self.crossed[key] = self.crossed.get(key, 0) + 1
            cands.remove(pkt)
            pkt.done = True
            self.clock += 1
            self.count -= 1
            return pkt
        return None
