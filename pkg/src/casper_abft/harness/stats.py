"""Per-run records, sweep aggregation and the parallel seed sweep."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

from ..sim.properties import check_properties
from ..sim.scenario import ScenarioConfig
from ..sim.simulator import run_scenario
from ..sim.transcript import Transcript


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class RunRecord:
    """What a sweep keeps from one transcript."""

    scenario_id: str
    seed: int
    decided: bool
    steps: int  # steps to the last honest decision, or max_steps if undecided
    decision_values: tuple
    messages: int  # packets sent by honest participants
    honest: int
    exit_code: int

    @property
    def agreement_violation(self) -> bool:
        return len(set(self.decision_values)) > 1


def summarize_run(tr: Transcript) -> RunRecord:
    cfg = tr.config
    honest = set(cfg.honest)
    messages = 0
    for e in tr.events:
        if e.kind == "SEND" and e.actor in honest:
            messages += len(e.fields()["to"].split(","))
    steps = tr.steps_to_decision()
    return RunRecord(
        scenario_id=cfg.scenario_id,
        seed=cfg.seed,
        decided=tr.all_decided,
        steps=cfg.max_steps if steps is None else steps,
        decision_values=tuple(sorted({o[0] for o in tr.outcomes.values() if o is not None})),
        messages=messages,
        honest=len(honest),
        exit_code=check_properties(tr).exit_code(),
    )


@dataclass(frozen=True)
class SweepSummary:
    scenario_id: str
    seeds_run: int
    decisions: int
    undecided: int
    agreement_violations: int
    property_failures: int
    mean_steps: Optional[float]  # over deciding runs only
    max_steps: int  # undecided runs count as the configured max_steps
    mean_messages_per_participant: float

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def exit_code(self) -> int:
        if self.property_failures or self.agreement_violations:
            return 3
        return 2 if self.undecided else 0


def aggregate(records: Sequence[RunRecord]) -> SweepSummary:
    if not records:
        raise StatsError("no runs to summarize")
    ids = {r.scenario_id for r in records}
    if len(ids) > 1:
        raise StatsError(f"runs come from {len(ids)} different scenarios: {sorted(ids)}")
    deciding = [r.steps for r in records if r.decided]
    return SweepSummary(
        scenario_id=ids.pop(),
        seeds_run=len(records),
        decisions=len(deciding),
        undecided=len(records) - len(deciding),
        agreement_violations=sum(r.agreement_violation for r in records),
        property_failures=sum(r.exit_code == 3 for r in records),
        mean_steps=sum(deciding) / len(deciding) if deciding else None,
        max_steps=max(r.steps for r in records),
        mean_messages_per_participant=sum(r.messages / r.honest for r in records) / len(records),
    )


def emit_stats(transcripts: Iterable[Transcript]) -> SweepSummary:
    """Aggregate transcripts of one scenario (any seeds) into a summary."""
    return aggregate([summarize_run(tr) for tr in transcripts])


def _run_one(config: ScenarioConfig) -> RunRecord:
    return summarize_run(run_scenario(config))


def sweep(config: ScenarioConfig, seeds: Iterable[int], workers: Optional[int] = None) -> list[RunRecord]:
    """Run ``config`` under each seed; records come back in seed order.

    ``workers`` of 1 runs in-process; None uses one process per CPU.
    """
    configs = [config.with_seed(s) for s in sorted(seeds)]
    if workers is None:
        workers = min(len(configs), os.cpu_count() or 1)
    if workers <= 1 or len(configs) <= 1:
        return [_run_one(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, configs, chunksize=max(1, len(configs) // (4 * workers))))
