import pytest
from hypothesis import given
from hypothesis import strategies as st

from casper_abft.engine import CoinMode
from casper_abft.sim.scenario import (
    Adversary,
    ConfigError,
    Mode,
    ScenarioConfig,
    ScenarioParseError,
    impossibility_config,
    parse_scenario,
    render_scenario,
)


def test_inline_example():
    cfg = parse_scenario("n=4 t=1 initial=0,0,0 byzantine=3 adversary=mute seed=7")
    assert (cfg.n, cfg.t, cfg.initial, cfg.byzantine, cfg.adversary, cfg.seed) == (
        4, 1, (0, 0, 0), frozenset({3}), Adversary.MUTE, 7,
    )
    assert (cfg.mode, cfg.coin, cfg.max_steps) == (Mode.REVISED, CoinMode.LOCAL, 1000)
    assert cfg.honest == [0, 1, 2]


def test_impossibility_example_matches_canned_config():
    text = "n=7 t=2 mode=legacy adversary=split initial=0,0,0,1,1,1 byzantine=6 seed=1"
    assert parse_scenario(text) == impossibility_config(2, seed=1)


def test_defaults_and_comments():
    cfg = parse_scenario("# a comment\nn=4\nt=1  # trailing\ninitial=1,0,1,0\n")
    assert cfg.adversary is Adversary.NONE and cfg.byzantine == frozenset()


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("n=4 t=2 initial=0,0,0,0", 1, "n <= 3t"),
        ("n=4\nt=1\ninitial=0,0\nbyzantine=2,3", 4, "|byzantine| > t"),
        ("t=1 initial=0,0,0,0", 1, "missing required key 'n'"),
        ("n=4\nt=1\ninitial=0,0,0,0\ncolour=red", 4, "unknown key"),
        ("n=4 t=1 n=4 initial=0,0,0,0", 1, "duplicate key"),
        ("n=4 t=1 initial=0,0,0", 1, "initial lists 3 values"),
        ("n=4 t=1 initial=0,0,0,0 adversary=sneaky", 1, "adversary must be one of"),
        ("n=four t=1 initial=0", 1, "integer"),
    ],
)
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ScenarioParseError) as exc:
        parse_scenario(text)
    assert exc.value.line == line
    assert fragment in str(exc.value)


def test_constructor_rejects_bad_configs():
    with pytest.raises(ConfigError):
        ScenarioConfig(n=3, t=1, initial=(0, 0, 0))
    with pytest.raises(ConfigError):
        ScenarioConfig(n=4, t=1, initial=(0, 0), byzantine=frozenset({2, 3}))


def test_scenario_id_ignores_seed():
    cfg = impossibility_config(2, seed=1)
    assert cfg.scenario_id == cfg.with_seed(99).scenario_id
    assert cfg.scenario_id != impossibility_config(3).scenario_id


@st.composite
def configs(draw):
    t = draw(st.integers(0, 3))
    n = draw(st.integers(3 * t + 1, 3 * t + 4))
    byz = draw(st.frozensets(st.integers(0, n - 1), max_size=t))
    initial = tuple(draw(st.lists(st.sampled_from([0, 1]), min_size=n - len(byz), max_size=n - len(byz))))
    return ScenarioConfig(
        n=n,
        t=t,
        initial=initial,
        byzantine=byz,
        mode=draw(st.sampled_from(Mode)),
        adversary=draw(st.sampled_from(Adversary)),
        coin=draw(st.sampled_from(CoinMode)),
        seed=draw(st.integers(0, 2**63 - 1)),
        max_steps=draw(st.integers(1, 5000)),
    )


@given(configs())
def test_render_parse_round_trip(cfg):
    assert parse_scenario(render_scenario(cfg)) == cfg
