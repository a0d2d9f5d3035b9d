"""Run transcripts and their tab-separated text form."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Union

from .scenario import ScenarioConfig, parse_scenario, render_scenario

KINDS = ("SEND", "DELIVER", "ACCEPT", "DECIDE", "FLAG", "COIN")

COMPLETE = "complete"
MAX_STEPS = "max_steps"
STALLED = "stalled"


class NetworkEvent(NamedTuple):
    seq: int
    kind: str
    actor: int
    step: Optional[int]
    phase: str  # phase name, or "-"
    detail: str  # space separated key=value pairs

    def fields(self) -> dict[str, str]:
        return dict(part.split("=", 1) for part in self.detail.split(" ") if part)


@dataclass
class Transcript:
    config: ScenarioConfig
    events: list = field(default_factory=list)
    outcomes: dict = field(default_factory=dict)  # honest id -> (value, step) or None
    status: str = COMPLETE

    def log(self, kind: str, actor: int, step: Optional[int], phase: str, detail: str) -> None:
        self.events.append(NetworkEvent(len(self.events), kind, actor, step, phase, detail))

    @property
    def all_decided(self) -> bool:
        return all(o is not None for o in self.outcomes.values())

    def steps_to_decision(self) -> Optional[int]:
        """Number of steps run before the last honest decision, or None if undecided."""
        if not self.outcomes or not self.all_decided:
            return None
        return max(step for _, step in self.outcomes.values()) + 1

    def decide_steps(self) -> list[int]:
        return [o[1] for o in self.outcomes.values() if o is not None]


def render_transcript(tr: Transcript) -> str:
    out = ["# " + line for line in render_scenario(tr.config).splitlines()]
    for e in tr.events:
        step = "-" if e.step is None else str(e.step)
        out.append(f"{e.seq}\t{e.kind}\t{e.actor}\t{step}\t{e.phase}\t{e.detail}")
    for p in sorted(tr.outcomes):
        o = tr.outcomes[p]
        out.append(f"outcome\tP{p}\t" + ("undecided" if o is None else f"decided={o[0]}@{o[1]}"))
    out.append(f"status\t{tr.status}")
    return "\n".join(out) + "\n"


class TranscriptFormatError(ValueError):
    pass


def parse_transcript(text: str) -> Transcript:
    header, events, outcomes, status = [], [], {}, None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("# "):
            header.append(line[2:])
            continue
        cols = line.split("\t")
        if cols[0] == "outcome":
            who, what = cols[1], cols[2]
            p = int(who[1:])
            if what == "undecided":
                outcomes[p] = None
            else:
                value, step = what[len("decided=") :].split("@")
                outcomes[p] = (int(value), int(step))
        elif cols[0] == "status":
            status = cols[1]
        elif len(cols) == 6:
            seq, kind, actor, step, phase, detail = cols
            if kind not in KINDS:
                raise TranscriptFormatError(f"line {lineno}: unknown event kind {kind!r}")
            events.append(
                NetworkEvent(int(seq), kind, int(actor), None if step == "-" else int(step), phase, detail)
            )
        else:
            raise TranscriptFormatError(f"line {lineno}: cannot parse {line!r}")
    if status is None:
        raise TranscriptFormatError("missing status line")
    return Transcript(parse_scenario("\n".join(header)), events, outcomes, status)


def write_transcript(tr: Transcript, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(render_transcript(tr).encode("utf-8"))
    return path


def read_transcript(path: Union[str, Path]) -> Transcript:
    return parse_transcript(Path(path).read_bytes().decode("utf-8"))
