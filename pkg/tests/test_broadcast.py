import pytest

from casper_abft.broadcast import (
    BroadcastEndpoint,
    DuplicateBroadcast,
    InstanceMismatch,
    RbInstanceState,
    RbKind,
    RbMessage,
    deserialize_rb,
    rb_start,
    rb_step,
    serialize_rb,
)
from casper_abft.protocol import Phase, ProtocolParams
from casper_abft.sim.explore import explore_schedules, instance_config, random_schedules

P4 = ProtocolParams(4, 1)
SLOT = (0, Phase.VOTE)


def msg(kind, relayer, payload=b"v", origin=0):
    return RbMessage.make(kind, origin, relayer, SLOT, payload)


def fresh(owner=1):
    return RbInstanceState(owner, 0, SLOT)


def kinds(sends):
    return sorted({(s.msg.kind, s.msg.payload) for s in sends})


def test_start_addresses_everyone():
    sends = rb_start(0, SLOT, b"v", P4)
    assert [s.dst for s in sends] == [0, 1, 2, 3]
    assert all(s.msg.kind == RbKind.INITIAL and s.msg.relayer == 0 for s in sends)


def test_endpoint_refuses_second_start():
    ep = BroadcastEndpoint(0, P4)
    ep.start(SLOT, b"v")
    with pytest.raises(DuplicateBroadcast):
        ep.start(SLOT, b"w")


def test_adversary_may_bypass_guard():
    assert rb_start(0, SLOT, b"v", P4) != rb_start(0, SLOT, b"w", P4)


def test_initial_triggers_echo():
    _, out, acc = rb_step(fresh(), msg(RbKind.INITIAL, 0), P4)
    assert kinds(out) == [(RbKind.ECHO, b"v")] and len(out) == 4 and acc is None


def test_initial_from_non_origin_is_ignored():
    state, out, _ = rb_step(fresh(), msg(RbKind.INITIAL, 2), P4)
    assert out == [] and not state.echoed


def test_third_echo_triggers_ready():
    s = fresh()
    rb_step(s, msg(RbKind.INITIAL, 0), P4)
    for r in (0, 1):
        _, out, _ = rb_step(s, msg(RbKind.ECHO, r), P4)
        assert out == []
    _, out, _ = rb_step(s, msg(RbKind.ECHO, 2), P4)
    assert kinds(out) == [(RbKind.READY, b"v")]


def test_two_echoes_are_not_enough():
    # 2 is not more than (4 + 1) / 2
    s = fresh()
    for r in (0, 2):
        rb_step(s, msg(RbKind.ECHO, r), P4)
    assert not s.readied


def test_second_ready_amplifies():
    s = fresh()
    rb_step(s, msg(RbKind.READY, 2), P4)
    _, out, acc = rb_step(s, msg(RbKind.READY, 3), P4)
    assert kinds(out) == [(RbKind.ECHO, b"v"), (RbKind.READY, b"v")]
    assert acc is None


def test_third_ready_accepts():
    s = fresh()
    for r in (0, 2):
        rb_step(s, msg(RbKind.READY, r), P4)
    _, _, acc = rb_step(s, msg(RbKind.READY, 3), P4)
    assert acc == b"v" and s.accepted == b"v"


def test_duplicates_ignored():
    s = fresh()
    rb_step(s, msg(RbKind.READY, 2), P4)
    _, out, _ = rb_step(s, msg(RbKind.READY, 2), P4)
    assert out == [] and len(s.ready_senders[b"v"]) == 1
    # a second READY from the same relayer with another payload is also ignored
    rb_step(s, msg(RbKind.READY, 2, b"w"), P4)
    assert b"w" not in s.ready_senders


def test_flags_fire_once_and_acceptance_is_final():
    s = fresh()
    sent = []
    for r in (0, 1, 2, 3):
        sent += rb_step(s, msg(RbKind.READY, r), P4)[1]
    for r in (0, 1, 2, 3):
        sent += rb_step(s, msg(RbKind.READY, r, b"w"), P4)[1]
    assert len(sent) == 8 and s.accepted == b"v"


def test_cross_instance_rejected():
    with pytest.raises(InstanceMismatch):
        rb_step(fresh(), msg(RbKind.ECHO, 1, origin=2), P4)


def test_serialization_round_trip():
    m = msg(RbKind.READY, 3, b"\x00payload")
    assert deserialize_rb(serialize_rb(m)) == m
    with pytest.raises(ValueError):
        deserialize_rb(serialize_rb(m)[:-1] + b"X")


def test_exhaustive_honest_transmitter_totality():
    rep = explore_schedules(instance_config(4, byzantine_transmitter=False), depth=200)
    assert rep.complete and rep.ok
    assert set(rep.outcomes) == {frozenset({b"v"})}


def test_exhaustive_honest_transmitter_with_mute_peer():
    rep = explore_schedules(instance_config(4, byzantine_transmitter=False, extra_mute=1), depth=200)
    assert rep.complete and rep.ok


def test_depth_zero_is_one_leaf():
    rep = explore_schedules(instance_config(4, byzantine_transmitter=True), depth=0)
    assert (rep.states, rep.leaves, rep.complete, rep.ok) == (1, 1, False, True)


def test_shallow_byzantine_exploration_is_incomplete_but_safe():
    rep = explore_schedules(instance_config(4, byzantine_transmitter=True), depth=4)
    assert not rep.complete and rep.ok


def test_random_schedules_n7():
    for byz, mute in ((False, 2), (True, 1)):
        rep = random_schedules(instance_config(7, byz, extra_mute=mute), runs=50, seed=3)
        assert rep.ok and rep.leaves == 50
