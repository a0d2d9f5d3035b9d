"""Scenario configuration and its flat ``key=value`` file format."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping

from ..engine import CoinMode
from ..protocol import ProtocolParams


class Mode(Enum):
    REVISED = "revised"
    LEGACY = "legacy"


class Adversary(Enum):
    NONE = "none"
    MUTE = "mute"
    EQUIVOCATE = "equivocate"
    SPLIT = "split"
    REORDER = "reorder"
    DUAL_BROADCAST = "dual_broadcast"


class ConfigError(ValueError):
    pass


class ScenarioParseError(ConfigError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    t: int
    initial: tuple  # one bit per honest participant, ascending id order
    byzantine: frozenset = field(default_factory=frozenset)
    mode: Mode = Mode.REVISED
    adversary: Adversary = Adversary.NONE
    coin: CoinMode = CoinMode.LOCAL
    seed: int = 0
    max_steps: int = 1000

    def __post_init__(self) -> None:
        if self.t < 0 or self.n <= 3 * self.t:
            raise ConfigError(f"n <= 3t (n={self.n}, t={self.t})")
        if len(self.byzantine) > self.t:
            raise ConfigError(f"|byzantine| = {len(self.byzantine)} exceeds t = {self.t}")
        if any(not 0 <= p < self.n for p in self.byzantine):
            raise ConfigError(f"byzantine ids must lie in [0, {self.n})")
        if len(self.initial) != self.n - len(self.byzantine):
            raise ConfigError(
                f"initial lists {len(self.initial)} values for {self.n - len(self.byzantine)} honest participants"
            )
        if any(b not in (0, 1) for b in self.initial):
            raise ConfigError("initial values must be 0 or 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")

    @property
    def params(self) -> ProtocolParams:
        return ProtocolParams(self.n, self.t)

    @property
    def honest(self) -> list[int]:
        return [p for p in range(self.n) if p not in self.byzantine]

    @property
    def initial_values(self) -> Mapping[int, int]:
        return dict(zip(self.honest, self.initial))

    @property
    def scenario_id(self) -> str:
        """Digest of every field except the seed, shared by all runs of a sweep."""
        text = render_scenario(replace(self, seed=0))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)


_KEYS = ("n", "t", "initial", "byzantine", "mode", "adversary", "coin", "seed", "max_steps")
_REQUIRED = ("n", "t", "initial")


def render_scenario(config: ScenarioConfig) -> str:
    lines = [
        f"n={config.n}",
        f"t={config.t}",
        "initial=" + ",".join(str(b) for b in config.initial),
        "byzantine=" + ",".join(str(p) for p in sorted(config.byzantine)),
        f"mode={config.mode.value}",
        f"adversary={config.adversary.value}",
        f"coin={config.coin.value}",
        f"seed={config.seed}",
        f"max_steps={config.max_steps}",
    ]
    return "\n".join(lines) + "\n"


def _int(value: str, key: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ScenarioParseError(line, f"{key} must be an integer, got {value!r}") from None


def _int_list(value: str, key: str, line: int) -> list[int]:
    if not value.strip():
        return []
    return [_int(v.strip(), key, line) for v in value.split(",")]


def _enum(cls, value: str, key: str, line: int):
    try:
        return cls(value.lower())
    except ValueError:
        choices = ", ".join(e.value for e in cls)
        raise ScenarioParseError(line, f"{key} must be one of {choices}, got {value!r}") from None


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse ``key=value`` tokens, one or more per line; ``#`` starts a comment."""
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        for token in line.split():
            if "=" not in token:
                raise ScenarioParseError(lineno, f"expected key=value, got {token!r}")
            key, value = token.split("=", 1)
            if key not in _KEYS:
                raise ScenarioParseError(lineno, f"unknown key {key!r}")
            if key in raw:
                raise ScenarioParseError(lineno, f"duplicate key {key!r}")
            raw[key] = (value, lineno)
    last = max((ln for _, ln in raw.values()), default=1)
    for key in _REQUIRED:
        if key not in raw:
            raise ScenarioParseError(last, f"missing required key {key!r}")

    def get(key, conv, default=None):
        if key not in raw:
            return default
        value, ln = raw[key]
        return conv(value, key, ln)

    n = get("n", _int)
    t = get("t", _int)
    kwargs = dict(
        n=n,
        t=t,
        initial=tuple(get("initial", _int_list)),
        byzantine=frozenset(get("byzantine", _int_list, [])),
        mode=get("mode", lambda v, k, ln: _enum(Mode, v, k, ln), Mode.REVISED),
        adversary=get("adversary", lambda v, k, ln: _enum(Adversary, v, k, ln), Adversary.NONE),
        coin=get("coin", lambda v, k, ln: _enum(CoinMode, v, k, ln), CoinMode.LOCAL),
        seed=get("seed", _int, 0),
        max_steps=get("max_steps", _int, 1000),
    )
    if t is not None and n is not None and n <= 3 * t:
        raise ScenarioParseError(raw["t"][1], f"n <= 3t (n={n}, t={t})")
    if len(kwargs["byzantine"]) > t:
        raise ScenarioParseError(raw["byzantine"][1], f"|byzantine| > t ({len(kwargs['byzantine'])} > {t})")
    try:
        return ScenarioConfig(**kwargs)
    except ConfigError as exc:
        raise ScenarioParseError(raw["initial"][1], str(exc)) from None


def impossibility_config(t: int, seed: int = 1, max_steps: int = 1000) -> ScenarioConfig:
    """3t+1 participants, t-1 mute, honest inputs split (t+1)/(t+1), legacy rules."""
    n = 3 * t + 1
    byz = frozenset(range(n - (t - 1), n))
    return ScenarioConfig(
        n=n,
        t=t,
        initial=(0,) * (t + 1) + (1,) * (t + 1),
        byzantine=byz,
        mode=Mode.LEGACY,
        adversary=Adversary.SPLIT,
        seed=seed,
        max_steps=max_steps,
    )


def lemma1_config(n: int, value: int = 0, seed: int = 1, adversary: Adversary = Adversary.MUTE) -> ScenarioConfig:
    """Unanimous honest input with the maximum number of byzantine participants."""
    t = (n - 1) // 3
    byz = frozenset(range(n - t, n))
    return ScenarioConfig(
        n=n, t=t, initial=(value,) * (n - t), byzantine=byz, adversary=adversary, seed=seed
    )
