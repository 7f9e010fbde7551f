"""INI run configuration.

Example::

    [paths]
    input = data/*.csv
    output = out

    [battery]
    nominal_capacity = 250

    [patterns]
    gen_min_duration = 1800

    [analysis]
    gap_policy = exclude
    gap_threshold = 600
    tz_offset = 8

    [cost]
    horizon = 10
    scenarios = lead-acid, li-ion

    [cost.lead-acid]
    battery_price = 500
    energy_density = 1/35
    ...

    [simulate]
    days = 30
    start = 2016-10-14
    drift_rate = 10.9
    seed = 0

Numbers may be written as fractions (``1/35``). Command-line flags override
file values.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import date
from fractions import Fraction
from pathlib import Path

from .core import DEFAULT_TZ_OFFSET_HOURS, BatterySystemSpec, CostScenario
from .metrics.integrate import DEFAULT_GAP_THRESHOLD, GAP_POLICIES
from .patterns import PatternRule
from .synth import DEFAULT_MIX, SCENARIO_PATTERNS


class ConfigError(ValueError):
    pass


class BadScenario(ConfigError):
    pass


def parse_number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# lead-acid vs Li-ion at the high price points, 100 kWh pack, moving by porter
DEFAULT_COST_SCENARIOS = (
    CostScenario(battery_price=500.0, energy_density=1 / 35, moving_price=10.0, pack_energy=100.0, service_life=2.0, name="lead-acid"),
    CostScenario(battery_price=2000.0, energy_density=1 / 16, moving_price=10.0, pack_energy=100.0, service_life=15.0, name="li-ion"),
)


@dataclass(frozen=True)
class SimulateConfig:
    days: int = 30
    start: date = date(2016, 10, 14)
    drift_rate: float = 0.0  # s/day
    seed: int = 0
    cadence: float = 15.0
    truth_dt: float = 0.01
    mix: dict = field(default_factory=lambda: dict(DEFAULT_MIX))

    def __post_init__(self):
        if self.days < 1:
            raise BadScenario("simulate.days must be >= 1")
        if not self.cadence > 0:
            raise BadScenario("simulate.cadence must be > 0")
        unknown = set(self.mix) - set(SCENARIO_PATTERNS)
        if unknown:
            raise BadScenario(f"unknown patterns in mix: {sorted(unknown)}")
        if not any(w > 0 for w in self.mix.values()) or any(w < 0 for w in self.mix.values()):
            raise BadScenario("mix weights must be >= 0 with at least one positive")


@dataclass(frozen=True)
class RunConfig:
    input_glob: str = "data/*.csv"
    output_dir: str = "out"
    battery: BatterySystemSpec = field(default_factory=BatterySystemSpec)
    pattern_overrides: dict = field(default_factory=dict)
    gap_policy: str = "exclude"
    gap_threshold: float = DEFAULT_GAP_THRESHOLD
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS
    flip_current: bool = False
    workers: int = 1
    cost_horizon: int = 10
    cost_scenarios: tuple[CostScenario, ...] = DEFAULT_COST_SCENARIOS
    simulate: SimulateConfig = field(default_factory=SimulateConfig)

    def __post_init__(self):
        if self.gap_policy not in GAP_POLICIES:
            raise ConfigError(f"gap_policy must be one of {GAP_POLICIES}")
        if not self.gap_threshold > 0:
            raise ConfigError("gap_threshold must be > 0")
        if not -14 <= self.tz_offset_hours <= 14:
            raise ConfigError("tz_offset must lie in [-14, 14] hours")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.cost_horizon < 1:
            raise ConfigError("cost horizon must be >= 1")
        self.pattern_rule()  # validate overrides early

    def pattern_rule(self) -> PatternRule:
        try:
            return PatternRule.for_capacity(
                self.battery.nominal_capacity, gap_threshold=self.gap_threshold, **self.pattern_overrides
            )
        except TypeError as exc:
            raise ConfigError(f"bad [patterns] key: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def as_dict(self) -> dict:
        d = asdict(self)
        d["simulate"]["start"] = self.simulate.start.isoformat()
        return d

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _typed(cls, section: configparser.SectionProxy, skip=()) -> dict:
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        kind = str(types[key])
        if "bool" in kind:
            out[key] = _parse_bool(raw)
        elif kind.startswith("int"):
            out[key] = int(parse_number(raw))
        elif "tuple" in kind:
            out[key] = tuple(parse_number(x) for x in raw.split(","))
        elif kind.startswith("str"):
            out[key] = raw.strip()
        else:
            out[key] = parse_number(raw)
    return out


def _cost_scenario(section: configparser.SectionProxy, name: str) -> CostScenario:
    values = _typed(CostScenario, section, skip=("name",))
    try:
        return CostScenario(name=section.get("name", name), **values)
    except (TypeError, ValueError) as exc:
        raise BadScenario(f"[{section.name}]: {exc}") from exc


def load_config(path: str | Path | None = None) -> RunConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_parser(cp)


def config_from_parser(cp: configparser.ConfigParser) -> RunConfig:
    kw: dict = {}
    try:
        if cp.has_section("paths"):
            s = cp["paths"]
            if "input" in s:
                kw["input_glob"] = s["input"].strip()
            if "output" in s:
                kw["output_dir"] = s["output"].strip()
        if cp.has_section("battery"):
            kw["battery"] = BatterySystemSpec(**_typed(BatterySystemSpec, cp["battery"]))
        if cp.has_section("patterns"):
            kw["pattern_overrides"] = _typed(PatternRule, cp["patterns"])
        if cp.has_section("analysis"):
            s = cp["analysis"]
            for key, target, conv in (
                ("gap_policy", "gap_policy", str.strip),
                ("gap_threshold", "gap_threshold", parse_number),
                ("tz_offset", "tz_offset_hours", parse_number),
                ("flip_current", "flip_current", _parse_bool),
                ("workers", "workers", lambda x: int(parse_number(x))),
            ):
                if key in s:
                    kw[target] = conv(s[key])
        if cp.has_section("cost"):
            s = cp["cost"]
            if "horizon" in s:
                kw["cost_horizon"] = int(parse_number(s["horizon"]))
            names = [n.strip() for n in s.get("scenarios", "").split(",") if n.strip()]
            if not names:
                names = [sec[len("cost."):] for sec in cp.sections() if sec.startswith("cost.")]
            scenarios = []
            for name in names:
                if not cp.has_section(f"cost.{name}"):
                    raise BadScenario(f"missing section [cost.{name}]")
                scenarios.append(_cost_scenario(cp[f"cost.{name}"], name))
            kw["cost_scenarios"] = tuple(scenarios)
        if cp.has_section("simulate"):
            s = cp["simulate"]
            sim: dict = {}
            for key in ("days", "seed"):
                if key in s:
                    sim[key] = int(parse_number(s[key]))
            for key in ("drift_rate", "cadence", "truth_dt"):
                if key in s:
                    sim[key] = parse_number(s[key])
            if "start" in s:
                sim["start"] = date.fromisoformat(s["start"].strip())
            if "mix" in s:
                mix = {}
                for part in s["mix"].split(","):
                    name, _, weight = part.partition(":")
                    mix[name.strip()] = parse_number(weight)
                sim["mix"] = mix
            kw["simulate"] = SimulateConfig(**sim)
        return RunConfig(**kw)
    except BadScenario:
        raise
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def with_overrides(cfg: RunConfig, **flags) -> RunConfig:
    """Apply command-line values that are not None."""
    given = {k: v for k, v in flags.items() if v is not None}
    sim = {k[len("sim_"):]: given.pop(k) for k in list(given) if k.startswith("sim_")}
    if sim:
        given["simulate"] = replace(cfg.simulate, **sim)
    return replace(cfg, **given) if given else cfg
