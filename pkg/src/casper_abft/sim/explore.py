"""Exhaustive and randomized schedule exploration of one reliable-broadcast instance.

The explored system is a single broadcast instance among ``n`` participants.
An honest transmitter sends one payload and every packet is eventually
delivered. A DUAL_BROADCAST transmitter may, at any moment, hand any honest
participant an INITIAL, ECHO or READY carrying either of two payloads, or
never send it at all. Honest participants count only the first message of
each kind per relayer, so this covers every strategy open to a byzantine
transmitter that sends conflicting INITIALs.

States are merged up to the identity of honest relayers (an honest relayer
sends each kind at most once to each node) and permutations of honest nodes.
Packets that can no longer change their receiver's observable state are
discarded.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

from ..broadcast import RbInstanceState, RbKind, RbMessage, rb_step
from ..protocol import Phase, ProtocolParams
from .scenario import Adversary, ScenarioConfig

SLOT = (0, Phase.VOTE)
PAYLOADS = (b"v", b"w")
KINDS = (RbKind.INITIAL, RbKind.ECHO, RbKind.READY)


@dataclass
class ExplorationReport:
    states: int = 0
    leaves: int = 0
    complete: bool = True
    violations: list = field(default_factory=list)
    outcomes: Counter = field(default_factory=Counter)  # accepted payload set -> leaf count
    byzantine_transmitter: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        who = "byzantine" if self.byzantine_transmitter else "honest"
        return (
            f"transmitter={who} states={self.states} leaves={self.leaves} "
            f"complete={str(self.complete).lower()} violations={len(self.violations)}"
        )


def _clone(s: RbInstanceState) -> RbInstanceState:
    return RbInstanceState(
        s.owner,
        s.origin,
        s.slot,
        s.initial_seen,
        s.echoed,
        s.readied,
        {k: set(v) for k, v in s.echo_senders.items()},
        {k: set(v) for k, v in s.ready_senders.items()},
        set(s.echo_from),
        set(s.ready_from),
        s.accepted,
        s.ready_payload,
    )


def _relevant(state: RbInstanceState, msg: RbMessage) -> bool:
    """Whether delivering ``msg`` could still change anything observable at ``state``.

    An accepted instance is finished; once READY is sent, ECHOs only feed
    the echo count, which no longer matters; once ECHO is sent, the INITIAL
    has nothing left to trigger.
    """
    if state.accepted is not None:
        return False
    if msg.kind == RbKind.ECHO:
        return not state.readied and msg.relayer not in state.echo_from
    if msg.kind == RbKind.INITIAL:
        return not state.echoed and not state.initial_seen
    return msg.relayer not in state.ready_from


class _Node(NamedTuple):
    state: RbInstanceState
    inbox: tuple  # pending RbMessages addressed to this node
    key: tuple


class _System:
    def __init__(self, config: ScenarioConfig) -> None:
        self.params = ProtocolParams(config.n, config.t)
        self.honest = config.honest
        self.byzantine = frozenset(config.byzantine)
        self.dual = config.adversary is Adversary.DUAL_BROADCAST and bool(self.byzantine)
        self.origin = min(self.byzantine) if self.dual else self.honest[0]
        self.forged = [RbMessage.make(k, self.origin, self.origin, SLOT, v) for k in KINDS for v in PAYLOADS]

    def node(self, state: RbInstanceState, inbox, state_key=None) -> _Node:
        inbox = tuple(m for m in inbox if _relevant(state, m))
        if state_key is None:
            state_key = self._state_key(state)
        return _Node(state, inbox, (state_key, tuple(sorted((int(m.kind), m.payload) for m in inbox))))

    def initial(self) -> dict:
        inbox = ()
        if not self.dual:
            inbox = (RbMessage.make(RbKind.INITIAL, self.origin, self.origin, SLOT, PAYLOADS[0]),)
        return {p: self.node(RbInstanceState(p, self.origin, SLOT), inbox) for p in self.honest}

    def deliver(self, nodes: dict, dst: int, msg: RbMessage, index=None) -> dict:
        """Deliver ``msg`` to ``dst``; ``index`` is its inbox position, None for a forged message."""
        entry = nodes[dst]
        inbox = entry.inbox if index is None else entry.inbox[:index] + entry.inbox[index + 1 :]
        state = _clone(entry.state)
        _, out, _ = rb_step(state, msg, self.params)
        new = dict(nodes)
        new[dst] = self.node(state, inbox)
        for s in out:
            if s.dst in new and _relevant(new[s.dst].state, s.msg):
                e = new[s.dst]
                new[s.dst] = self.node(e.state, e.inbox + (s.msg,), e.key[0])
        return new

    def forgeable(self, nodes: dict) -> list:
        if not self.dual:
            return []
        return [(d, m) for d in self.honest for m in self.forged if _relevant(nodes[d].state, m)]

    def moves(self, nodes: dict):
        """(dst, msg, inbox index or None) for each distinct next delivery."""
        for dst, entry in nodes.items():
            seen = set()
            for i, msg in enumerate(entry.inbox):
                key = (int(msg.kind), msg.payload)
                if key not in seen:
                    seen.add(key)
                    yield dst, msg, i
        for dst, msg in self.forgeable(nodes):
            yield dst, msg, None

    def _state_key(self, s: RbInstanceState):
        if s.accepted is not None:
            return ("done", s.accepted, s.ready_payload or b"")
        byz = self.byzantine

        def split(d):
            return tuple(sorted((v, len(r - byz), tuple(sorted(r & byz))) for v, r in d.items()))

        echoes = () if s.readied else (split(s.echo_senders), tuple(sorted(s.echo_from & byz)))
        return (
            "open",
            s.ready_payload or b"",
            s.echoed or s.initial_seen,
            s.echoed,
            s.readied,
            echoes,
            split(s.ready_senders),
            tuple(sorted(s.ready_from & byz)),
        )

    @staticmethod
    def canonical(nodes: dict) -> tuple:
        return tuple(sorted(e.key for e in nodes.values()))

    @staticmethod
    def in_flight(nodes: dict) -> bool:
        return any(e.inbox for e in nodes.values())

    def check(self, nodes: dict, report: ExplorationReport, quiescent: bool) -> None:
        """Safety at every state; totality or all-or-nothing once nothing honest is in flight."""
        accepted = {p: e.state.accepted for p, e in nodes.items()}
        values = {v for v in accepted.values() if v is not None}
        readies = {e.state.ready_payload for e in nodes.values() if e.state.ready_payload is not None}
        if len(readies) > 1:
            report.violations.append(("ready_uniqueness", accepted))
        if len(values) > 1:
            report.violations.append(("all_or_nothing", accepted))
        if not quiescent:
            return
        report.leaves += 1
        report.outcomes[frozenset(values)] += 1
        if not self.dual and any(v != PAYLOADS[0] for v in accepted.values()):
            report.violations.append(("totality", accepted))
        if self.dual and values and None in accepted.values():
            report.violations.append(("all_or_nothing", accepted))


def explore_schedules(config: ScenarioConfig, depth: int, max_states: int = 2_000_000) -> ExplorationReport:
    """Enumerate every delivery interleaving of one broadcast instance up to ``depth`` deliveries.

    Every state with no honest packet in flight is a leaf, since the
    schedule may end there. Depth 0 yields the initial state as the single
    leaf. Hitting ``depth`` with work left, or exceeding ``max_states``
    distinct states, marks the report incomplete.
    """
    system = _System(config)
    report = ExplorationReport(byzantine_transmitter=system.dual)
    nodes = system.initial()
    visited = {system.canonical(nodes)}
    stack = [(nodes, 0)]
    while stack:
        nodes, d = stack.pop()
        report.states += 1
        if d >= depth:
            if system.in_flight(nodes) or system.forgeable(nodes):
                report.complete = False
            report.leaves += 1
            system.check(nodes, report, quiescent=False)
            continue
        system.check(nodes, report, quiescent=not system.in_flight(nodes))
        for dst, msg, index in system.moves(nodes):
            nxt = system.deliver(nodes, dst, msg, index)
            key = system.canonical(nxt)
            if key in visited:
                continue
            if len(visited) >= max_states:
                report.complete = False
                return report
            visited.add(key)
            stack.append((nxt, d + 1))
    return report


def random_schedules(config: ScenarioConfig, runs: int, seed: int = 0, inject_rate: float = 0.3) -> ExplorationReport:
    """Run ``runs`` random schedules of one instance to quiescence and check each."""
    system = _System(config)
    report = ExplorationReport(byzantine_transmitter=system.dual)
    rng = random.Random(seed)
    for _ in range(runs):
        nodes = system.initial()
        while True:
            flight = [(d, m, i) for d, e in nodes.items() for i, m in enumerate(e.inbox)]
            forged = system.forgeable(nodes)
            if not flight and (not forged or rng.random() < 0.25):
                break
            if forged and (not flight or rng.random() < inject_rate):
                nodes = system.deliver(nodes, *rng.choice(forged))
            else:
                nodes = system.deliver(nodes, *rng.choice(flight))
            report.states += 1
            system.check(nodes, report, quiescent=False)
        system.check(nodes, report, quiescent=True)
    return report


def instance_config(n: int, byzantine_transmitter: bool, extra_mute: int = 0) -> ScenarioConfig:
    """Scenario shell for broadcast exploration with t = (n - 1) // 3."""
    t = (n - 1) // 3
    count = (1 if byzantine_transmitter else 0) + extra_mute
    byz = frozenset(range(n - count, n))
    adv = Adversary.DUAL_BROADCAST if byzantine_transmitter else Adversary.MUTE
    return ScenarioConfig(n=n, t=t, initial=(0,) * (n - len(byz)), byzantine=byz, adversary=adv)
