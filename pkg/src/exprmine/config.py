"""Run configuration: grouped dataclasses loaded from an INI file.

One file can drive every subcommand; the [synth] section is read only by
the generator and ignored by a search run. Unknown sections or keys are
rejected rather than silently dropped, because a typoed knob that falls
back to its default is the worst kind of config bug.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigInvalidError
from .features import WINDOWS, window_seconds
from .mcts import PUCT_VARIANTS
from .synth import SynthConfig

DEFAULT_CONSTANTS = (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 5.0, 10.0)


@dataclass(frozen=True)
class DataConfig:
    csv: str = ""
    schema: str = ""
    features: str = ""  # empty means the schema's default feature set
    out_dir: str = "runs/latest"
    holdout_fraction: float = 0.2


@dataclass(frozen=True)
class MctsConfig:
    n_expr: int = 32
    sims_per_move: int = 200
    c: float = 1.5
    temperature: float = 1.0
    variant: str = "alphazero"
    max_len: int = 40
    k: float = 0.2
    constants: tuple[float, ...] = DEFAULT_CONSTANTS
    max_epochs: int = 200
    patience: int = 10
    min_improvement: float = 1e-6
    seed: int = 0


@dataclass(frozen=True)
class PolicyConfig:
    lr: float = 0.05
    l2: float = 1e-4
    context: int = 4
    passes: int = 5
    external_addr: str = ""
    reward_weighting: bool = False
    timeout: float = 0.1


@dataclass(frozen=True)
class EvalConfig:
    threshold: float = 0.5
    epsilon: float = 1e-6
    minibatch: int = 256


@dataclass(frozen=True)
class RulesConfig:
    tau: float = 0.5
    combine: str = "any"


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    mcts: MctsConfig = field(default_factory=MctsConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    rules: RulesConfig = field(default_factory=RulesConfig)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["mcts"]["constants"] = list(out["mcts"]["constants"])
        return out


_RUN_SECTIONS = {
    "data": DataConfig,
    "mcts": MctsConfig,
    "policy": PolicyConfig,
    "eval": EvalConfig,
    "rules": RulesConfig,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(raw: str, default, section: str, key: str):
    raw = raw.strip()
    where = f"[{section}] {key}"
    if isinstance(default, bool):
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigInvalidError(f"{where} must be a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigInvalidError(f"{where} must be an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            if key == "span" and raw in WINDOWS:
                return float(window_seconds(raw))
            raise ConfigInvalidError(f"{where} must be a number, got {raw!r}") from None
    if isinstance(default, tuple):
        try:
            return tuple(float(part) for part in raw.split(",") if part.strip())
        except ValueError:
            raise ConfigInvalidError(
                f"{where} must be comma-separated numbers, got {raw!r}"
            ) from None
    return raw


def _section_kwargs(parser: configparser.ConfigParser, section: str, cls) -> dict:
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    values = {}
    if parser.has_section(section):
        for key, raw in parser.items(section):
            if key not in names:
                raise ConfigInvalidError(f"unknown key {key!r} in section [{section}]")
            values[key] = _coerce(raw, getattr(defaults, key), section, key)
    return values


def _read_ini(path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigInvalidError(f"cannot read config file {path!r}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigInvalidError(f"config file {path!r} is not valid INI: {exc}") from None
    return parser


def validate_run_config(cfg: RunConfig) -> None:
    checks = [
        (0.0 <= cfg.data.holdout_fraction < 1.0, "data.holdout_fraction must be in [0, 1)"),
        (cfg.mcts.n_expr >= 1, "mcts.n_expr must be >= 1"),
        (cfg.mcts.sims_per_move >= 1, "mcts.sims_per_move must be >= 1"),
        (cfg.mcts.c >= 0.0, "mcts.c must be >= 0"),
        (cfg.mcts.temperature >= 0.0, "mcts.temperature must be >= 0"),
        (cfg.mcts.variant in PUCT_VARIANTS, f"mcts.variant must be one of {sorted(PUCT_VARIANTS)}"),
        (cfg.mcts.max_len >= 1, "mcts.max_len must be >= 1"),
        (0.0 < cfg.mcts.k <= 1.0, "mcts.k must be in (0, 1]"),
        (len(cfg.mcts.constants) > 0, "mcts.constants must not be empty"),
        (cfg.mcts.max_epochs >= 1, "mcts.max_epochs must be >= 1"),
        (cfg.mcts.patience >= 1, "mcts.patience must be >= 1"),
        (cfg.mcts.min_improvement >= 0.0, "mcts.min_improvement must be >= 0"),
        (cfg.policy.lr > 0.0, "policy.lr must be > 0"),
        (cfg.policy.l2 >= 0.0, "policy.l2 must be >= 0"),
        (cfg.policy.context >= 1, "policy.context must be >= 1"),
        (cfg.policy.passes >= 1, "policy.passes must be >= 1"),
        (cfg.policy.timeout > 0.0, "policy.timeout must be > 0"),
        (0.0 < cfg.eval.threshold < 1.0, "eval.threshold must be in (0, 1)"),
        (cfg.eval.epsilon > 0.0, "eval.epsilon must be > 0"),
        (cfg.eval.minibatch >= 1, "eval.minibatch must be >= 1"),
        (0.0 < cfg.rules.tau < 1.0, "rules.tau must be in (0, 1)"),
        (cfg.rules.combine in ("any", "all"), "rules.combine must be 'any' or 'all'"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigInvalidError(message)


def load_run_config(path: str) -> RunConfig:
    parser = _read_ini(path)
    for section in parser.sections():
        if section != "synth" and section not in _RUN_SECTIONS:
            raise ConfigInvalidError(f"unknown config section [{section}]")
    cfg = RunConfig(
        **{
            name: cls(**_section_kwargs(parser, name, cls))
            for name, cls in _RUN_SECTIONS.items()
        }
    )
    validate_run_config(cfg)
    return cfg


def load_synth_config(path: str) -> SynthConfig:
    parser = _read_ini(path)
    if not parser.has_section("synth"):
        raise ConfigInvalidError(f"config file {path!r} has no [synth] section")
    values = _section_kwargs(parser, "synth", SynthConfig)
    return SynthConfig(**values)
