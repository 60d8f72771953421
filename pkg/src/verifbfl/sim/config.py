"""Simulation config: an INI file with one section per participant.

Example::

    [simulation]
    seed = 7
    level = test
    dims = 4, 3
    n_eval = 16

    [task]
    reward = 5000
    target_accuracy = 0.8
    n_trainers = 3
    max_rounds = 2

    [dp]
    epsilon = 50
    clip = 4

    [oracles]
    behaviors = honest, honest, honest, honest

    [participant:alice]
    role = trainer
    behavior = honest
    stake = 200
    data_seed = 1

Unknown sections or keys are errors, so typos fail before anything runs.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from verifbfl.errors import ConfigError, InvalidBudget
from verifbfl.fl.dp import DpParams
from verifbfl.ledger.machine import LedgerConfig
from verifbfl.ledger.txs import AGGREGATOR, TRAINER
from verifbfl.oracle import BEHAVIORS as ORACLE_BEHAVIORS

TRAINER_BEHAVIORS = ("honest", "free_rider", "accuracy_forger", "poisoner")
AGGREGATOR_BEHAVIORS = ("honest", "lazy_aggregator")

PRESET_DIR = Path(__file__).parent / "presets"


@dataclass(frozen=True)
class Participant:
    name: str
    role: str
    behavior: str = "honest"
    stake: int = 200
    data_seed: int = 0
    balance: int = 1000
    samples: int = 0  # 0: use the simulation default


@dataclass(frozen=True)
class SimulationConfig:
    participants: tuple
    seed: int = 0
    level: str = "test"
    dims: tuple = (4, 3)
    n_eval: int = 16
    samples_per_trainer: int = 120
    epochs: int = 5
    lr: float = 0.1
    separation: float = 3.0
    publisher: str = "publisher"
    publisher_balance: int = 10_000
    reward: int = 5000
    target_accuracy: Fraction = Fraction(4, 5)
    n_trainers: int = 3
    max_rounds: int = 2
    dp: DpParams | None = field(default_factory=lambda: DpParams(50.0, 4.0))
    oracle_behaviors: tuple = ("honest",) * 4
    ledger: LedgerConfig = field(default_factory=LedgerConfig)

    def __post_init__(self):
        validate(self)

    @property
    def trainers(self) -> list:
        return [p for p in self.participants if p.role == TRAINER]

    @property
    def aggregators(self) -> list:
        return [p for p in self.participants if p.role == AGGREGATOR]

    def with_seed(self, seed: int) -> "SimulationConfig":
        return replace(self, seed=seed)


def validate(cfg: SimulationConfig) -> None:
    if cfg.level not in ("test", "standard"):
        raise ConfigError(f"level must be test or standard, got {cfg.level!r}")
    if len(cfg.dims) < 2 or min(cfg.dims) < 1 or cfg.dims[-1] < 2:
        raise ConfigError("dims must list input, optional hidden, and >= 2 output units")
    if cfg.n_eval < 1 or cfg.samples_per_trainer < 1 or cfg.epochs < 0 or cfg.lr < 0:
        raise ConfigError("n_eval, samples_per_trainer must be positive; epochs, lr non-negative")
    if not 0 <= cfg.target_accuracy <= 1:
        raise ConfigError("target_accuracy must lie in [0, 1]")
    if cfg.n_trainers < 1 or cfg.max_rounds < 1:
        raise ConfigError("n_trainers and max_rounds must be positive")
    names = [p.name for p in cfg.participants]
    if len(set(names)) != len(names) or cfg.publisher in names:
        raise ConfigError("participant names must be unique and differ from the publisher")
    for p in cfg.participants:
        allowed = TRAINER_BEHAVIORS if p.role == TRAINER else AGGREGATOR_BEHAVIORS if p.role == AGGREGATOR else None
        if allowed is None:
            raise ConfigError(f"{p.name}: unknown role {p.role!r}")
        if p.behavior not in allowed:
            raise ConfigError(f"{p.name}: behavior {p.behavior!r} is not defined for role {p.role}")
        if p.stake > p.balance:
            raise ConfigError(f"{p.name}: stake exceeds balance")
    if len(cfg.trainers) != cfg.n_trainers:
        raise ConfigError(f"config lists {len(cfg.trainers)} trainers, task needs {cfg.n_trainers}")
    if not cfg.aggregators:
        raise ConfigError("at least one aggregator is required")
    if not cfg.oracle_behaviors:
        raise ConfigError("at least one oracle node is required")
    for b in cfg.oracle_behaviors:
        if b not in ORACLE_BEHAVIORS:
            raise ConfigError(f"unknown oracle behavior {b!r}")
    if cfg.reward > cfg.publisher_balance:
        raise ConfigError("publisher cannot fund the reward")


_SECTIONS = {
    "simulation": {"seed", "level", "dims", "n_eval", "samples_per_trainer", "epochs", "lr", "separation"},
    "task": {"publisher", "publisher_balance", "reward", "target_accuracy", "n_trainers", "max_rounds"},
    "dp": {"epsilon", "clip", "enabled"},
    "oracles": {"behaviors"},
    "ledger": {"r_min", "k_min", "compensation", "trainer_share_percent", "block_capacity", "block_period"},
}
_PARTICIPANT_KEYS = {"role", "behavior", "stake", "data_seed", "balance", "samples"}


def _num(section, key, conv, default):
    if key not in section:
        return default
    try:
        return conv(section[key])
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: {exc}") from exc


def parse_config(text: str, seed: int | None = None) -> SimulationConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for name in cp.sections():
        allowed = _PARTICIPANT_KEYS if name.startswith("participant:") else _SECTIONS.get(name)
        if allowed is None:
            raise ConfigError(f"unknown section [{name}]")
        extra = set(cp[name]) - allowed
        if extra:
            raise ConfigError(f"[{name}] unknown keys: {', '.join(sorted(extra))}")

    kw = {}
    if cp.has_section("simulation"):
        s = cp["simulation"]
        kw["seed"] = _num(s, "seed", int, 0)
        kw["level"] = s.get("level", "test").strip()
        if "dims" in s:
            kw["dims"] = tuple(_num(s, "dims", lambda v: [int(x) for x in v.split(",")], None))
        for key, conv in (("n_eval", int), ("samples_per_trainer", int), ("epochs", int), ("lr", float),
                          ("separation", float)):
            if key in s:
                kw[key] = _num(s, key, conv, None)
    if cp.has_section("task"):
        s = cp["task"]
        if "publisher" in s:
            kw["publisher"] = s["publisher"].strip()
        for key in ("publisher_balance", "reward", "n_trainers", "max_rounds"):
            if key in s:
                kw[key] = _num(s, key, int, None)
        if "target_accuracy" in s:
            kw["target_accuracy"] = _num(s, "target_accuracy", lambda v: Fraction(v.strip()), None)
    if cp.has_section("dp"):
        s = cp["dp"]
        if s.get("enabled", "true").strip().lower() in ("0", "false", "no", "off"):
            kw["dp"] = None
        else:
            try:
                kw["dp"] = DpParams(_num(s, "epsilon", float, 50.0), _num(s, "clip", float, 4.0))
            except InvalidBudget as exc:
                raise ConfigError(str(exc)) from exc
    if cp.has_section("oracles"):
        kw["oracle_behaviors"] = tuple(b.strip() for b in cp["oracles"].get("behaviors", "").split(",") if b.strip())
    if cp.has_section("ledger"):
        s = cp["ledger"]
        lk = {k: _num(s, k, int, None) for k in ("r_min", "k_min", "compensation", "trainer_share_percent",
                                                 "block_capacity") if k in s}
        if "block_period" in s:
            lk["block_period"] = _num(s, "block_period", float, None)
        try:
            kw["ledger"] = LedgerConfig(**lk)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    parts = []
    for name in cp.sections():
        if not name.startswith("participant:"):
            continue
        s = cp[name]
        pname = name.split(":", 1)[1].strip()
        if not pname or "role" not in s:
            raise ConfigError(f"[{name}] needs a name and a role")
        parts.append(Participant(
            pname, s["role"].strip(), s.get("behavior", "honest").strip(), _num(s, "stake", int, 200),
            _num(s, "data_seed", int, len(parts) + 1), _num(s, "balance", int, 1000), _num(s, "samples", int, 0),
        ))
    kw["participants"] = tuple(parts)
    if "n_trainers" not in kw:
        kw["n_trainers"] = sum(1 for p in parts if p.role == TRAINER)
    if seed is not None:
        kw["seed"] = seed
    return SimulationConfig(**kw)


def load_config(path, seed: int | None = None) -> SimulationConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, seed)


def preset(name: str, seed: int | None = None) -> SimulationConfig:
    path = PRESET_DIR / f"{name}.ini"
    if not path.exists():
        raise ConfigError(f"unknown preset {name!r}; have {', '.join(preset_names())}")
    return load_config(path, seed)


def preset_names() -> list:
    return sorted(p.stem for p in PRESET_DIR.glob("*.ini"))
