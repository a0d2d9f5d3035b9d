"""Transcript-level safety, validity and broadcast checks."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

from .scenario import Mode
from .transcript import COMPLETE, Transcript


@dataclass
class PropertyResult:
    name: str
    passed: bool = True
    first_violation: Optional[int] = None  # event seq
    detail: str = ""

    def fail(self, seq: Optional[int], detail: str) -> None:
        if self.passed:
            self.passed = False
            self.first_violation = seq
            self.detail = detail


@dataclass
class PropertyReport:
    results: dict = field(default_factory=dict)
    all_decided: bool = False
    status: str = COMPLETE

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results.values())

    def __getitem__(self, name: str) -> PropertyResult:
        return self.results[name]

    def exit_code(self) -> int:
        if not self.ok:
            return 3
        return 0 if self.all_decided else 2

    def lines(self) -> list[str]:
        out = []
        for r in self.results.values():
            where = "" if r.first_violation is None else f" at event {r.first_violation}"
            out.append(f"{'PASS' if r.passed else 'FAIL'}  {r.name}{where}{'  ' + r.detail if r.detail else ''}")
        return out


PROPERTIES = (
    "agreement",
    "validity",
    "propagation",
    "broadcast_totality",
    "all_or_nothing",
    "ready_uniqueness",
    "no_honest_flagging",
    "decision_soundness",
    "eventual_delivery",
)


def check_properties(tr: Transcript) -> PropertyReport:
    cfg = tr.config
    honest = set(cfg.honest)
    quorum_2t1 = 2 * cfg.t + 1
    res = {name: PropertyResult(name) for name in PROPERTIES}
    revised = cfg.mode is Mode.REVISED

    inputs = set(cfg.initial)
    unanimous = inputs.pop() if len(inputs) == 1 else None

    first_value = None
    steps: list[int] = []
    accepts: dict[tuple, dict[str, int]] = defaultdict(dict)
    readies: dict[tuple, dict[str, int]] = defaultdict(dict)
    accepted_by: dict[tuple, set] = defaultdict(set)
    initials: dict[tuple, int] = {}
    sent_to_honest = delivered = 0

    for e in tr.events:
        kind = e.kind
        if kind == "DELIVER":
            delivered += 1
            continue
        if kind == "SEND":
            f = e.fields()
            n_honest = sum(1 for d in f["to"].split(",") if d and int(d) in honest)
            sent_to_honest += n_honest
            if e.actor not in honest or "rb" not in f:
                continue
            inst = (int(f["origin"]), e.step, e.phase)
            if f["rb"] == "READY":
                readies[inst].setdefault(f["id"], e.seq)
            elif f["rb"] == "INITIAL" and int(f["origin"]) == e.actor:
                initials.setdefault(inst, e.seq)
            continue
        if e.actor not in honest:
            continue
        f = e.fields()
        if kind == "ACCEPT":
            inst = (int(f["origin"]), e.step, e.phase)
            accepts[inst].setdefault(f["id"], e.seq)
            accepted_by[inst].add(e.actor)
        elif kind == "DECIDE":
            value = int(f["value"])
            if first_value is None:
                first_value = value
            elif value != first_value:
                res["agreement"].fail(e.seq, f"P{e.actor} decided {value}, earlier decision was {first_value}")
            if unanimous is not None and (value != unanimous or e.step != 0):
                res["validity"].fail(e.seq, f"P{e.actor} decided {value}@{e.step} on unanimous input {unanimous}")
            steps.append(e.step)
            if max(steps) - min(steps) > 1:
                res["propagation"].fail(e.seq, f"decide steps span {min(steps)}..{max(steps)}")
            if int(f["score"]) < quorum_2t1:
                res["decision_soundness"].fail(e.seq, f"score {f['score']} < {quorum_2t1}")
        elif kind == "FLAG":
            who = int(f["who"])
            if f["reason"] == "conflicting-decision":
                res["agreement"].fail(e.seq, f"P{e.actor} saw a justified conflicting decision")
            elif who in honest:
                res["no_honest_flagging"].fail(e.seq, f"P{e.actor} flagged honest P{who}: {f['reason']}")

    for inst, ids in accepts.items():
        if len(ids) > 1:
            res["all_or_nothing"].fail(sorted(ids.values())[1], f"instance {inst} accepted {len(ids)} payloads")
    for inst, ids in readies.items():
        if len(ids) > 1:
            res["ready_uniqueness"].fail(sorted(ids.values())[1], f"instance {inst} readied {len(ids)} payloads")

    if revised and tr.status == COMPLETE:
        for inst, seq in sorted(initials.items(), key=lambda kv: kv[1]):
            missing = honest - accepted_by[inst]
            if missing:
                res["broadcast_totality"].fail(seq, f"instance {inst} never accepted by {sorted(missing)}")
                break
        for inst, who in accepted_by.items():
            if who and who != honest:
                res["all_or_nothing"].fail(
                    accepts[inst][next(iter(accepts[inst]))],
                    f"instance {inst} accepted by {sorted(who)} only",
                )
                break
        if delivered != sent_to_honest:
            res["eventual_delivery"].fail(None, f"{sent_to_honest - delivered} packets never delivered")

    return PropertyReport(res, tr.all_decided, tr.status)


def split_intact(tr: Transcript) -> tuple[bool, Optional[int]]:
    """Whether every completed step began with the initial 0/1 split among honest votes.

    Returns (intact, first broken step).
    """
    cfg = tr.config
    honest = set(cfg.honest)
    want = (list(cfg.initial).count(0), list(cfg.initial).count(1))
    per_step: dict[int, dict[int, str]] = defaultdict(dict)
    for e in tr.events:
        if e.kind == "SEND" and e.actor in honest and e.phase == "VOTE":
            f = e.fields()
            if f.get("rb", "INITIAL") == "INITIAL":
                per_step[e.step][e.actor] = f["est"]
    for step in sorted(per_step):
        votes = per_step[step]
        if len(votes) < len(honest):
            continue
        got = (sum(v == "0" for v in votes.values()), sum(v == "1" for v in votes.values()))
        if got != want:
            return False, step
    return True, None

