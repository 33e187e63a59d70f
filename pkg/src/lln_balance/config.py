"""Scenario configuration and its flat key/value file format.

A scenario file is a flat YAML mapping; every key is optional and absent
keys take the defaults below (the published simulation table where it gives
a value).  See README.md for the full key list.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .automaton import AutomatonConfig
from .metrics import EnergyLedger
from .protocol import VARIANTS, ProtocolConfig

class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot (``1e-6``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


AUTOMATON_KEYS = tuple(f.name for f in dataclasses.fields(AutomatonConfig))
PROTOCOL_KEYS = ("variant", "zeta", "batch_p", "min_parents", "max_parents", "dio_period", "invert_traffic_term", "baseline_acks")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key, self.line = key, line
        where = ""
        if key is not None:
            where = f"{key}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)


@dataclass(frozen=True)
class ScenarioConfig:
    n_nodes: int = 50
    area_width: float = 1000.0
    area_height: float = 1000.0
    sim_time: float = 1000.0
    lambda_: float = 0.1
    data_rate: float = 250_000.0
    radio_range: float = 100.0
    data_size: int = 50
    dio_size: int = 80
    dao_size: int = 100
    dis_size: int = 77
    ack_size: int = 80
    initial_energy: float = 2.0
    p_tx: float = 0.0522
    p_rx: float = 0.0591
    p_idle: float = 0.00128
    p_sleep: float = 1e-6
    queue_capacity: int = 10
    loss_scale: float = 0.2
    proc_delay: float = 1e-4
    metric_dt: float = 10.0
    lifetime_cap: float | None = None
    seed: int = 1
    placement: str = "connected"
    lqi_override: float | None = None
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)

    def __post_init__(self):
        positive = (
            "n_nodes", "area_width", "area_height", "sim_time", "lambda_", "data_rate",
            "radio_range", "data_size", "dio_size", "dao_size", "dis_size", "ack_size",
            "initial_energy", "queue_capacity", "metric_dt",
        )
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"must be a positive number, got {value!r}", _file_key(name))
        for name in ("p_tx", "p_rx", "p_idle", "p_sleep", "proc_delay", "loss_scale"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
                raise ConfigError(f"must be a non-negative number, got {value!r}", name)
        if self.n_nodes < 2:
            raise ConfigError("need at least 2 nodes (sink + sensor)", "n_nodes")
        if self.loss_scale > 1:
            raise ConfigError("loss_scale must be <= 1", "loss_scale")
        if self.placement not in ("connected", "uniform"):
            raise ConfigError("must be 'connected' or 'uniform'", "placement")
        if self.lqi_override is not None and not 0 <= self.lqi_override <= 1:
            raise ConfigError("must lie in [0, 1]", "lqi_override")
        if self.lifetime_cap is not None and self.lifetime_cap <= 0:
            raise ConfigError("must be positive", "lifetime_cap")

    @property
    def cap(self) -> float:
        return self.sim_time if self.lifetime_cap is None else self.lifetime_cap

    @property
    def variant(self) -> str:
        return self.protocol.variant

    def ledger_template(self) -> EnergyLedger:
        return EnergyLedger(self.p_tx, self.p_rx, self.p_idle, self.p_sleep)

    def to_flat(self) -> dict:
        flat = {}
        for f in dataclasses.fields(self):
            if f.name == "protocol":
                continue
            flat[_file_key(f.name)] = getattr(self, f.name)
        for key in PROTOCOL_KEYS:
            flat[key] = getattr(self.protocol, key)
        for key in AUTOMATON_KEYS:
            flat[key] = getattr(self.protocol.automaton, key)
        return flat

    def with_overrides(self, **overrides) -> ScenarioConfig:
        flat = self.to_flat()
        flat.update({_file_key(k): v for k, v in overrides.items()})
        return from_mapping(flat)


def _file_key(attr: str) -> str:
    return "lambda" if attr == "lambda_" else attr


SCENARIO_KEYS = tuple(
    _file_key(f.name) for f in dataclasses.fields(ScenarioConfig) if f.name != "protocol"
)
ALL_KEYS = SCENARIO_KEYS + PROTOCOL_KEYS + AUTOMATON_KEYS

_INT_KEYS = {"n_nodes", "data_size", "dio_size", "dao_size", "dis_size", "ack_size",
             "queue_capacity", "seed", "batch_p", "min_parents", "max_parents"}
_STR_KEYS = {"placement", "variant"}
_BOOL_KEYS = {"invert_traffic_term", "baseline_acks"}
_NULLABLE = {"lifetime_cap", "lqi_override"}


def _coerce(key: str, value, line: int | None):
    if value is None and key in _NULLABLE:
        return None
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key, line)
        if key == "variant" and value not in VARIANTS:
            raise ConfigError(f"expected one of {VARIANTS}, got {value!r}", key, line)
        return value
    if key in _BOOL_KEYS:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key, line)
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", key, line)
    if key in _INT_KEYS:
        if value != int(value):
            raise ConfigError(f"expected an integer, got {value!r}", key, line)
        return int(value)
    return float(value)


def from_mapping(data: dict, lines: dict[str, int] | None = None) -> ScenarioConfig:
    lines = lines or {}
    unknown = sorted(set(data) - set(ALL_KEYS))
    if unknown:
        key = unknown[0]
        raise ConfigError(f"unknown key (valid keys: {', '.join(ALL_KEYS)})", key, lines.get(key))
    values = {k: _coerce(k, v, lines.get(k)) for k, v in data.items()}

    def build(cls, keys, **extra):
        kwargs = {k: values[k] for k in keys if k in values}
        return cls(**kwargs, **extra)

    def located(exc: ValueError, keys) -> ConfigError:
        msg = str(exc)
        key = next((k for k in keys if k in msg), None)
        if key is None:
            key = next((k for k in keys if k in values), None)
        return ConfigError(msg, key, lines.get(key) if key else None)

    try:
        auto = build(AutomatonConfig, AUTOMATON_KEYS)
    except ValueError as exc:
        raise located(exc, AUTOMATON_KEYS) from exc
    try:
        proto = build(ProtocolConfig, PROTOCOL_KEYS, automaton=auto)
    except ValueError as exc:
        raise located(exc, PROTOCOL_KEYS) from exc
    scen = {("lambda_" if k == "lambda" else k): v for k, v in values.items() if k in SCENARIO_KEYS}
    try:
        return ScenarioConfig(**scen, protocol=proto)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.key, lines.get(exc.key)) from exc


def parse_scenario_text(text: str) -> ScenarioConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed scenario file: {exc}", line=mark.line + 1 if mark else None) from exc
    if root is None:
        return ScenarioConfig()
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("scenario file must be a flat key/value mapping", line=root.start_mark.line + 1)
    lines = {}
    for key_node, value_node in root.value:
        if not isinstance(value_node, yaml.ScalarNode):
            raise ConfigError("nested values are not allowed", key_node.value, key_node.start_mark.line + 1)
        lines[key_node.value] = key_node.start_mark.line + 1
    data = load_yaml(text)
    return from_mapping(data, lines)


def parse_scenario(path) -> ScenarioConfig:
    return parse_scenario_text(Path(path).read_text())
