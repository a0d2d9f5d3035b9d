import os
import random
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casper_abft.engine import CoinMode
from casper_abft.sim.network import Network, Packet, Scheduler, ReorderScheduler
from casper_abft.sim.properties import check_properties, split_intact
from casper_abft.sim.scenario import Adversary, Mode, ScenarioConfig, impossibility_config, lemma1_config
from casper_abft.sim.simulator import Simulation, run_scenario
from casper_abft.sim.transcript import (
    COMPLETE,
    MAX_STEPS,
    NetworkEvent,
    parse_transcript,
    render_transcript,
)


def split7(adversary, seed=0, coin=CoinMode.LOCAL):
    return ScenarioConfig(
        n=7, t=2, initial=(0, 0, 0, 1, 1, 1), byzantine=frozenset({6}), adversary=adversary, coin=coin, seed=seed
    )


class TestRunScenario:
    def test_unanimous_decides_at_step_zero(self):
        tr = run_scenario(ScenarioConfig(n=4, t=1, initial=(0, 0, 0), byzantine=frozenset({3}), adversary=Adversary.MUTE))
        assert tr.outcomes == {0: (0, 0), 1: (0, 0), 2: (0, 0)}
        assert tr.status == COMPLETE
        assert check_properties(tr).ok

    def test_legacy_split_never_decides(self):
        tr = run_scenario(impossibility_config(2, seed=3, max_steps=200))
        assert tr.status == MAX_STEPS
        assert all(o is None for o in tr.outcomes.values())
        assert split_intact(tr) == (True, None)
        assert check_properties(tr).exit_code() == 2

    def test_same_seed_same_bytes(self):
        cfg = split7(Adversary.SPLIT, seed=11)
        assert render_transcript(run_scenario(cfg)) == render_transcript(run_scenario(cfg))

    def test_seed_changes_schedule(self):
        a = render_transcript(run_scenario(split7(Adversary.REORDER, seed=1)))
        b = render_transcript(run_scenario(split7(Adversary.REORDER, seed=2)))
        assert a != b

    @pytest.mark.parametrize("adversary", list(Adversary))
    def test_every_adversary_reaches_agreement(self, adversary):
        for seed in range(3):
            tr = run_scenario(split7(adversary, seed=seed, coin=CoinMode.COMMON))
            report = check_properties(tr)
            assert report.ok, report.lines()
            assert tr.all_decided

    def test_honest_messages_never_flagged(self):
        for seed in range(5):
            tr = run_scenario(split7(Adversary.EQUIVOCATE, seed=seed))
            assert check_properties(tr)["no_honest_flagging"].passed

    def test_equivocator_is_flagged_by_someone(self):
        flagged = set()
        for seed in range(5):
            tr = run_scenario(split7(Adversary.EQUIVOCATE, seed=seed))
            flagged |= {int(e.fields()["who"]) for e in tr.events if e.kind == "FLAG"}
        assert flagged <= {6}

    def test_dual_broadcast_origin_is_never_half_accepted(self):
        tr = run_scenario(lemma1_config(4, adversary=Adversary.DUAL_BROADCAST))
        assert check_properties(tr)["all_or_nothing"].passed


def test_determinism_across_hash_seeds(tmp_path):
    script = (
        "import sys\n"
        "from casper_abft.sim.scenario import *\n"
        "from casper_abft.sim.simulator import run_scenario\n"
        "from casper_abft.sim.transcript import render_transcript\n"
        "cfg = ScenarioConfig(n=7, t=2, initial=(0,0,0,1,1,1), byzantine=frozenset({6}),"
        " adversary=Adversary.SPLIT, seed=5)\n"
        "sys.stdout.write(render_transcript(run_scenario(cfg)))\n"
    )
    outs = set()
    for hash_seed in ("0", "1", "12345"):
        env = dict(os.environ, PYTHONHASHSEED=hash_seed)
        outs.add(subprocess.run([sys.executable, "-c", script], env=env, capture_output=True, check=True).stdout)
    assert len(outs) == 1


class TestTranscripts:
    def test_round_trip(self):
        tr = run_scenario(split7(Adversary.EQUIVOCATE, seed=4))
        text = render_transcript(tr)
        back = parse_transcript(text)
        assert back.config == tr.config
        assert back.events == tr.events
        assert back.outcomes == tr.outcomes and back.status == tr.status
        assert render_transcript(back) == text

    def test_summary_block(self):
        tr = run_scenario(lemma1_config(4))
        tail = render_transcript(tr).splitlines()[-4:]
        assert tail == ["outcome\tP0\tdecided=0@0", "outcome\tP1\tdecided=0@0", "outcome\tP2\tdecided=0@0", "status\tcomplete"]

    @settings(max_examples=30)
    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["SEND", "DELIVER", "ACCEPT", "DECIDE", "FLAG", "COIN"]),
                st.integers(0, 9),
                st.one_of(st.none(), st.integers(0, 10**6)),
                st.sampled_from(["VOTE", "AGGREGATE", "CONFIRM", "DECIDE", "-"]),
                st.dictionaries(st.sampled_from(["a", "id", "to", "est"]), st.from_regex(r"[0-9a-f,⊥?]{1,8}", fullmatch=True)),
            ),
            max_size=20,
        )
    )
    def test_round_trip_arbitrary_events(self, rows):
        tr = run_scenario(lemma1_config(4))
        tr.events = [
            NetworkEvent(i, kind, actor, step, phase, " ".join(f"{k}={v}" for k, v in detail.items()))
            for i, (kind, actor, step, phase, detail) in enumerate(rows)
        ]
        assert render_transcript(parse_transcript(render_transcript(tr))) == render_transcript(tr)


def _forge_decide(tr, actor, value=None, step=None):
    for i, e in enumerate(tr.events):
        if e.kind == "DECIDE" and e.actor == actor:
            f = e.fields()
            if value is not None:
                f["value"] = str(value)
            tr.events[i] = e._replace(
                step=e.step if step is None else step, detail=" ".join(f"{k}={v}" for k, v in f.items())
            )
            return tr.events[i].seq
    raise AssertionError("no decision to forge")


class TestProperties:
    def test_lemma1_transcript_passes_everything(self):
        report = check_properties(run_scenario(lemma1_config(7)))
        assert report.ok and report.exit_code() == 0

    def test_conflicting_decision_fails_agreement(self):
        tr = parse_transcript(render_transcript(run_scenario(lemma1_config(4))))
        seq = _forge_decide(tr, 2, value=1)
        report = check_properties(tr)
        assert not report["agreement"].passed
        assert report["agreement"].first_violation == seq
        assert report.exit_code() == 3

    def test_one_step_spread_is_fine(self):
        tr = run_scenario(lemma1_config(4))
        _forge_decide(tr, 1, step=1)
        report = check_properties(tr)
        assert report["propagation"].passed

    def test_two_step_spread_fails(self):
        tr = run_scenario(lemma1_config(4))
        _forge_decide(tr, 1, step=2)
        assert not check_properties(tr)["propagation"].passed

    def test_honest_flag_is_reported(self):
        tr = run_scenario(lemma1_config(4))
        tr.events.append(NetworkEvent(len(tr.events), "FLAG", 0, 0, "VOTE", "who=1 reason=test"))
        assert not check_properties(tr)["no_honest_flagging"].passed

    def test_two_accepted_payloads_fail_all_or_nothing(self):
        tr = run_scenario(lemma1_config(4))
        tr.events.append(NetworkEvent(len(tr.events), "ACCEPT", 0, 0, "VOTE", "origin=1 id=ffff est=1"))
        assert not check_properties(tr)["all_or_nothing"].passed


class TestScheduling:
    def _net(self, count):
        net = Network()
        pkts = [Packet(0, 1, i, 0, None, 0) for i in range(count)]
        for p in pkts:
            net.push(p)
        return net, pkts

    def test_deferral_cap_forces_oldest(self):
        net, pkts = self._net(10)
        net.clock = 6
        assert Scheduler(random.Random(0), cap=5).pick(net) is pkts[0]

    def test_random_pick_below_cap(self):
        net, _ = self._net(10)
        picks = {Scheduler(random.Random(s), cap=5).pick(net).msg for s in range(20)}
        assert len(picks) > 1

    def test_reorder_reproducible(self):
        def order(seed):
            net, _ = self._net(30)
            sched = ReorderScheduler(random.Random(seed), None, n=4, slow=1, period=5)
            return [net.remove(sched.pick(net)).msg for _ in range(30)]

        assert order(3) == order(3)

    def test_revised_runs_deliver_everything(self):
        tr = run_scenario(split7(Adversary.REORDER, seed=2))
        assert check_properties(tr)["eventual_delivery"].passed

    def test_legacy_split_feeds_own_side_first(self):
        sim = Simulation(impossibility_config(2, seed=1, max_steps=3))
        tr = sim.run()
        assert tr.config.mode is Mode.LEGACY
        # first delivery to every honest receiver carries its own value
        first = {}
        est_of = {}
        for e in tr.events:
            if e.kind == "SEND":
                est_of[e.fields()["id"]] = e.fields()["est"]
            if e.kind == "DELIVER" and e.step == 0 and e.actor not in first:
                first[e.actor] = est_of[e.fields()["id"]]
        cfg = tr.config
        assert all(first[p] == str(b) for p, b in cfg.initial_values.items())
