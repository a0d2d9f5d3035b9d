"""Deterministic discrete-event simulation of one scenario.

A single event loop owns every participant. Each iteration the scheduler
picks one in-flight packet, the receiving participant processes it, and
whatever it sends goes back into the network. Everything random comes from
two streams derived from the scenario seed: one for the scheduler and
adversary, one for the coins.
"""

from __future__ import annotations

import hashlib
import random
import struct
from typing import Optional

from ..broadcast import BroadcastEndpoint, RbKind, RbMessage, Send
from ..engine import (
    Broadcast,
    CoinFlipped,
    CoinMode,
    CoinSource,
    Decided,
    Flagged,
    SafetyAlarm,
    engine_init,
)
from ..legacy import LegacyEngine
from ..protocol import Message, deserialize, render_estimate, serialize
from .adversary import DualBroadcastNode, EquivocatingNode, MuteNode, SplitNode
from .network import (
    LegacySplitNetwork,
    Network,
    Packet,
    PreferenceScheduler,
    RandomScheduler,
    ReorderScheduler,
    deferral_cap,
)
from .scenario import Adversary, Mode, ScenarioConfig
from .transcript import COMPLETE, MAX_STEPS, STALLED, NetworkEvent, Transcript


def derive_seed(seed: int, domain: str) -> int:
    digest = hashlib.sha256(domain.encode() + b"\x00" + struct.pack(">q", seed)).digest()
    return int.from_bytes(digest[:8], "big")


def _ids(dsts) -> str:
    return ",".join(str(d) for d in dsts)


class HonestNode:
    def __init__(self, sim: "Simulation", me: int, initial: int) -> None:
        self.sim = sim
        self.me = me
        params = sim.config.params
        self.endpoint = BroadcastEndpoint(me, params)
        self.engine = engine_init(me, initial, params, sim.coin)

    def start(self) -> list[Send]:
        return self._act(self.engine.take_outbox())

    def receive(self, msg: RbMessage) -> list[Send]:
        sends, accepted = self.endpoint.receive(msg)
        if accepted is None:
            return sends
        sim = self.sim
        m = sim.decode(accepted)
        step, phase = msg.slot
        if m is None or m.sender != msg.origin or m.slot != msg.slot:
            sim.log("FLAG", self.me, step, phase.name, f"who={msg.origin} reason=misattributed-payload")
            return sends
        sim.log(
            "ACCEPT", self.me, step, phase.name,
            f"origin={msg.origin} id={m.short()} est={render_estimate(m.estimate)}",
        )
        return sends + self._act(self.engine.deliver(m))

    def _act(self, actions) -> list[Send]:
        sim = self.sim
        out: list[Send] = []
        for a in actions:
            if isinstance(a, Broadcast):
                m = a.message
                out.extend(self.endpoint.start(m.slot, sim.register(m)))
                sim.note_step(m.step)
            elif isinstance(a, Decided):
                via = "own" if a.via is None else str(a.via)
                sim.log("DECIDE", self.me, a.step, "DECIDE", f"value={a.value} score={a.score} via={via}")
                sim.note_decided(self.me, a.value, a.step)
            elif isinstance(a, Flagged):
                sim.log("FLAG", self.me, a.step, a.phase.name, f"who={a.who} reason={a.reason.replace(' ', '-')}")
            elif isinstance(a, CoinFlipped):
                sim.log("COIN", self.me, a.step, "-", f"value={a.value} mode={sim.coin.mode.value}")
            elif isinstance(a, SafetyAlarm):
                sim.log("FLAG", self.me, self.engine.step, "DECIDE", "who=-1 reason=conflicting-decision")
        return out


class LegacyNode:
    def __init__(self, sim: "Simulation", me: int, initial: int) -> None:
        self.sim = sim
        self.me = me
        self.engine = LegacyEngine(me, initial, sim.config.params, sim.coin)

    def start(self) -> list:
        return self._act(self.engine.start())

    def receive(self, m: Message) -> list:
        return self._act(self.engine.deliver(m))

    def _act(self, actions) -> list:
        sim = self.sim
        out = []
        for a in actions:
            if isinstance(a, Broadcast):
                sim.note_step(a.message.step)
                out.extend(Send(d, a.message) for d in range(sim.config.n))
            elif isinstance(a, Decided):
                sim.log("DECIDE", self.me, a.step, "DECIDE", f"value={a.value} score={a.score} via=own")
                sim.note_decided(self.me, a.value, a.step)
            elif isinstance(a, CoinFlipped):
                sim.log("COIN", self.me, a.step, "-", f"value={a.value} mode={sim.coin.mode.value}")
        return out


_BYZANTINE = {
    Adversary.NONE: MuteNode,
    Adversary.MUTE: MuteNode,
    Adversary.REORDER: MuteNode,
    Adversary.EQUIVOCATE: EquivocatingNode,
    Adversary.SPLIT: SplitNode,
    Adversary.DUAL_BROADCAST: DualBroadcastNode,
}


class Simulation:
    def __init__(self, config: ScenarioConfig, cap: Optional[int] = None) -> None:
        self.config = config
        self.rng = random.Random(derive_seed(config.seed, "scheduler"))
        self.coin = CoinSource(config.coin, derive_seed(config.seed, "coin"))
        self.transcript = Transcript(config)
        self._events = self.transcript.events
        self._payloads: dict[bytes, Optional[Message]] = {}
        self.legacy = config.mode is Mode.LEGACY
        self.honest = config.honest
        self.undecided = set(self.honest)
        self.top_step = 0
        self.decisions: dict[int, tuple] = {}

        n = config.n
        cap = deferral_cap(n) if cap is None else cap
        if self.legacy and config.adversary is Adversary.SPLIT:
            self.net = LegacySplitNetwork(self.rng, config.params.quorum)
        else:
            self.net = Network()
        self.scheduler = self._make_scheduler(cap)

        self.nodes: dict[int, object] = {}
        for p, bit in config.initial_values.items():
            self.nodes[p] = LegacyNode(self, p, bit) if self.legacy else HonestNode(self, p, bit)
        for p in sorted(config.byzantine):
            cls = MuteNode if self.legacy else _BYZANTINE[config.adversary]
            self.nodes[p] = cls(self, p)

    def _make_scheduler(self, cap: int):
        adv = self.config.adversary
        n = self.config.n
        if isinstance(self.net, LegacySplitNetwork):
            return None
        if adv is Adversary.REORDER:
            slow = max(1, self.config.t)
            return ReorderScheduler(self.rng, cap, n, slow, period=4 * n * n)
        if adv is Adversary.SPLIT:
            return PreferenceScheduler(self.rng, cap, lambda pkt: pkt.est is None or pkt.est == self.side_of(pkt.dst))
        return RandomScheduler(self.rng, cap)

    # -- helpers used by nodes ---------------------------------------------

    def log(self, kind: str, actor: int, step, phase: str, detail: str) -> None:
        self._events.append(NetworkEvent(len(self._events), kind, actor, step, phase, detail))

    def register(self, m: Message) -> bytes:
        payload = serialize(m)
        self._payloads[m.id] = m
        return payload

    def decode(self, payload: bytes) -> Optional[Message]:
        pid = hashlib.sha256(payload).digest()
        if pid not in self._payloads:
            try:
                self._payloads[pid] = deserialize(payload)
            except ValueError:
                self._payloads[pid] = None
        return self._payloads[pid]

    def side_of(self, p: int) -> int:
        node = self.nodes[p]
        engine = getattr(node, "engine", None)
        return engine.x if engine is not None else 0

    def rng_bit(self, p: int) -> int:
        return self.rng.randrange(2)

    def note_step(self, step: int) -> None:
        if step > self.top_step:
            self.top_step = step

    def note_decided(self, p: int, value: int, step: int) -> None:
        if p in self.undecided:
            self.undecided.discard(p)
            self.decisions[p] = (value, step)

    # -- network -------------------------------------------------------------

    def _message_of(self, msg):
        if self.legacy:
            return msg
        return self._payloads.get(msg.payload_id)

    def route(self, src: int, sends: list) -> None:
        work = [(src, sends)]
        byz = self.config.byzantine
        while work:
            sender, batch = work.pop(0)
            i = 0
            while i < len(batch):
                msg = batch[i].msg
                j = i
                while j < len(batch) and batch[j].msg is msg:
                    j += 1
                dsts = [s.dst for s in batch[i:j]]
                self._log_send(sender, msg, dsts)
                m = self._message_of(msg)
                est = None if m is None else m.estimate
                step = m.step if m is not None else None
                for d in dsts:
                    if d in byz:
                        work.append((d, self.nodes[d].receive(msg)))
                    else:
                        self.net.push(Packet(sender, d, msg, self.net.clock, est, step))
                i = j

    def _log_send(self, sender: int, msg, dsts: list[int]) -> None:
        if self.legacy:
            self.log(
                "SEND", sender, msg.step, msg.phase.name,
                f"to={_ids(dsts)} id={msg.short()} est={render_estimate(msg.estimate)}",
            )
            return
        m = self._payloads.get(msg.payload_id)
        est = "?" if m is None else render_estimate(m.estimate)
        step, phase = msg.slot
        self.log(
            "SEND", sender, step, phase.name,
            f"rb={msg.kind.name} origin={msg.origin} to={_ids(dsts)} id={msg.payload_id.hex()[:16]} est={est}",
        )

    def next_event(self) -> Optional[NetworkEvent]:
        """Deliver the packet the adversary picks next and return its DELIVER event."""
        if isinstance(self.net, LegacySplitNetwork):
            pkt = self.net.pick(
                self.honest,
                lambda p: self.nodes[p].engine.step,
                self.side_of,
            )
            if pkt is None:
                return None
        else:
            if not self.net.pending:
                return None
            pkt = self.net.remove(self.scheduler.pick(self.net))
        msg = pkt.msg
        if self.legacy:
            self.log("DELIVER", pkt.dst, msg.step, msg.phase.name, f"from={pkt.src} id={msg.short()}")
        else:
            step, phase = msg.slot
            self.log(
                "DELIVER", pkt.dst, step, phase.name,
                f"from={pkt.src} rb={msg.kind.name} origin={msg.origin} id={msg.payload_id.hex()[:16]}",
            )
        event = self._events[-1]
        self.route(pkt.dst, self.nodes[pkt.dst].receive(msg))
        return event

    # -- main loop -----------------------------------------------------------

    def run(self) -> Transcript:
        for p in sorted(self.nodes):
            self.route(p, self.nodes[p].start())
        status = COMPLETE
        max_steps = self.config.max_steps
        while True:
            if self.top_step >= max_steps and self.undecided:
                status = MAX_STEPS
                break
            if self.legacy and not self.undecided:
                break
            if self.next_event() is None:
                status = COMPLETE if not self.undecided else STALLED
                break
        tr = self.transcript
        tr.status = status
        tr.outcomes = {p: self.decisions.get(p) for p in self.honest}
        return tr


def run_scenario(config: ScenarioConfig, cap: Optional[int] = None) -> Transcript:
    """Run one scenario to completion, stall, or ``max_steps``."""
    return Simulation(config, cap).run()
