"""Scenario files: YAML with SI units spelled out in every key name.

Every key is optional; missing keys take the reference-system defaults below and
unknown keys are rejected. :func:`resolve` returns the fully populated
configuration, which :func:`dump` writes back in a form that re-parses to
the same value.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .battery import BatteryCalibration, ParamTable
from .dynamics import SagEvent, SimConfig
from .errors import ConfigurationError, PowerBufferError
from .phasor import FilterParams, InputImpedance, compute_input_impedance

# key -> (type, default); None defaults mean "derived" (see resolve)
SECTIONS: dict[str, dict[str, tuple[type, Any]]] = {
    "base": {
        "v_base_volts": (float, 415.0),
        "p_load_watts": (float, 100e3),
        "q_load_vars": (float, 0.0),
        "nominal_v_dc_volts": (float, 859.0),
    },
    "filter": {
        "resistance_ohms": (float, 61.33e-3),
        "inductance_henries": (float, 0.97e-3),
        "mains_freq_rad_per_s": (float, 2 * math.pi * 50),
    },
    "dc_link": {
        "capacitance_farads": (float, 10e-3),
    },
    "battery": {
        "e0_volts": (float, 864.0),
        "k_volts": (float, 140.0),
        "r0_ohms": (float, 0.7036),
        "k_r_ohms": (float, -0.3),
        "capacity_amp_hours": (float, 100.0),
        "sod": (float, 0.0),
        "sod_min": (float, 0.0),
        "sod_max": (float, 0.8),
    },
    "simulation": {
        "dt_seconds": (float, 50e-6),
        "t_end_seconds": (float, None),
        "detect_threshold_pu": (float, 0.95),
        "confirm_delay_seconds": (float, 2e-3),
        "dc_band_fraction": (float, 0.10),
        "battery_enabled": (bool, True),
        "discharge_current_amps": (float, None),
        "v_floor_volts": (float, 1.0),
        "regulator_tau_seconds": (float, 10e-3),
        "disconnect_band_fraction": (float, 0.005),
        "stop_on_collapse": (bool, True),
        "resistance_model": (str, "table"),
    },
}
TABLE_ROW = {"current_amps": float, "r_s_ohms": float, "r_p_ohms": float, "c_p_farads": float}
EVENT_ROW = {"t_start_seconds": float, "duration_seconds": float, "pos_pu": float, "neg_pu": float}
LIST_SECTIONS = {"rc_table": TABLE_ROW, "events": EVENT_ROW}

DEFAULT_TABLE = [
    {"current_amps": 153.0, "r_s_ohms": 0.461, "r_p_ohms": 0.288, "c_p_farads": 6.94},
    {"current_amps": 1000.0, "r_s_ohms": 0.216, "r_p_ohms": 0.072, "c_p_farads": 1.39},
]
# ten-cycle 80 % positive / 20 % negative sequence sag after two clean cycles
DEFAULT_EVENTS = [
    {"t_start_seconds": 0.04, "duration_seconds": 0.2, "pos_pu": 0.8, "neg_pu": 0.2},
]
POST_SAG_CYCLES = 5


class ScenarioError(ConfigurationError):
    """Malformed scenario file; the message carries the location."""


def _where(source: str, lines: dict, path: tuple) -> str:
    line = None
    for n in range(len(path), 0, -1):
        if path[:n] in lines:
            line = lines[path[:n]]
            break
    loc = f"{source}:{line}" if line else source
    return f"{loc}: {'.'.join(str(p) for p in path)}"


def _line_map(text: str) -> dict:
    """Map key paths to 1-based source lines."""
    out: dict = {}
    root = yaml.compose(text)

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                out[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                out[path + (i,)] = v.start_mark.line + 1
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return out


def _coerce(value, typ, where: str):
    if value is None:
        return None
    if typ is bool:
        if not isinstance(value, bool):
            raise ScenarioError(f"{where}: expected true/false, got {value!r}")
        return value
    if typ is float:
        if isinstance(value, str):
            # PyYAML reads exponents without a mantissa dot (50e-6) as strings
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, typ):
        raise ScenarioError(f"{where}: expected {typ.__name__}, got {value!r}")
    return value


def resolve(raw: dict | None, source: str = "<scenario>", lines: dict | None = None) -> dict:
    """Validate a parsed scenario mapping and fill in defaults."""
    raw = {} if raw is None else raw
    lines = lines or {}
    if not isinstance(raw, dict):
        raise ScenarioError(f"{source}: top level must be a mapping")
    known = set(SECTIONS) | set(LIST_SECTIONS)
    for key in raw:
        if key not in known:
            raise ScenarioError(f"{_where(source, lines, (key,))}: unknown section")

    out: dict = {}
    for section, spec in SECTIONS.items():
        given = raw.get(section) or {}
        if not isinstance(given, dict):
            raise ScenarioError(f"{_where(source, lines, (section,))}: expected a mapping")
        for key in given:
            if key not in spec:
                raise ScenarioError(f"{_where(source, lines, (section, key))}: unknown key")
        resolved = {}
        for key, (typ, default) in spec.items():
            where = _where(source, lines, (section, key))
            value = _coerce(given.get(key, default), typ, where)
            if value is None and default is not None:
                raise ScenarioError(f"{where}: a value is required")
            resolved[key] = value
        out[section] = resolved

    defaults = {"rc_table": DEFAULT_TABLE, "events": DEFAULT_EVENTS}
    for section, row_spec in LIST_SECTIONS.items():
        rows = raw.get(section, defaults[section])
        if rows is None:
            rows = []
        if not isinstance(rows, list):
            raise ScenarioError(f"{_where(source, lines, (section,))}: expected a list")
        parsed = []
        for i, row in enumerate(rows):
            if not isinstance(row, dict):
                raise ScenarioError(f"{_where(source, lines, (section, i))}: expected a mapping")
            for key in row:
                if key not in row_spec:
                    raise ScenarioError(f"{_where(source, lines, (section, i, key))}: unknown key")
            entry = {}
            for key, typ in row_spec.items():
                if key not in row:
                    if section == "events" and key == "neg_pu":
                        entry[key] = 0.0
                        continue
                    raise ScenarioError(f"{_where(source, lines, (section, i))}: missing {key}")
                entry[key] = _coerce(row[key], typ, _where(source, lines, (section, i, key)))
            parsed.append(entry)
        out[section] = copy.deepcopy(parsed)

    sim = out["simulation"]
    if sim["t_end_seconds"] is None:
        cycle = 2 * math.pi / out["filter"]["mains_freq_rad_per_s"]
        last = max((e["t_start_seconds"] + e["duration_seconds"] for e in out["events"]),
                   default=2 * cycle)
        sim["t_end_seconds"] = last + POST_SAG_CYCLES * cycle
    # instantiate once so invariant violations surface as scenario errors
    try:
        Scenario(out)._validate()
    except PowerBufferError as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    return out


def load(path) -> "Scenario":
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario ({exc.strerror})") from exc
    return loads(text, source=str(path))


def loads(text: str, source: str = "<scenario>") -> "Scenario":
    try:
        raw = yaml.safe_load(text)
        lines = _line_map(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ScenarioError(f"{loc}: YAML syntax error: {getattr(exc, 'problem', exc)}") from exc
    return Scenario(resolve(raw, source, lines))


def default() -> "Scenario":
    return Scenario(resolve({}))


def dump(config: dict) -> str:
    return yaml.safe_dump(config, sort_keys=False, default_flow_style=False)


@dataclass
class Scenario:
    """Resolved scenario with accessors for the model objects."""

    config: dict

    def _validate(self) -> None:
        # each accessor builds a model object whose constructor checks invariants
        for name in ("table", "events", "sim_config", "input_impedance", "filter"):
            getattr(self, name)
        self.calibration.check_sod(self.sod)

    @property
    def base(self) -> dict:
        return self.config["base"]

    @property
    def v_base(self) -> float:
        return self.base["v_base_volts"]

    @property
    def p_load(self) -> float:
        return self.base["p_load_watts"]

    @property
    def nominal_v_dc(self) -> float:
        return self.base["nominal_v_dc_volts"]

    @property
    def c_dc(self) -> float:
        return self.config["dc_link"]["capacitance_farads"]

    @property
    def sod(self) -> float:
        return self.config["battery"]["sod"]

    @property
    def input_impedance(self) -> InputImpedance:
        return compute_input_impedance(self.v_base, self.p_load, self.base["q_load_vars"])

    @property
    def filter(self) -> FilterParams:
        f = self.config["filter"]
        return FilterParams(f["resistance_ohms"], f["inductance_henries"],
                            f["mains_freq_rad_per_s"])

    @property
    def calibration(self) -> BatteryCalibration:
        b = self.config["battery"]
        return BatteryCalibration(e0=b["e0_volts"], k=b["k_volts"], r0=b["r0_ohms"],
                                  k_r=b["k_r_ohms"], capacity=b["capacity_amp_hours"],
                                  f_min=b["sod_min"], f_max=b["sod_max"])

    @property
    def table(self) -> ParamTable:
        return ParamTable.from_rows([
            (r["current_amps"], r["r_s_ohms"], r["r_p_ohms"], r["c_p_farads"])
            for r in self.config["rc_table"]
        ])

    @property
    def events(self) -> list[SagEvent]:
        return [SagEvent(e["t_start_seconds"], e["duration_seconds"], e["pos_pu"], e["neg_pu"])
                for e in self.config["events"]]

    @property
    def sim_config(self) -> SimConfig:
        s = self.config["simulation"]
        return SimConfig(
            dt=s["dt_seconds"], t_end=s["t_end_seconds"],
            detect_threshold=s["detect_threshold_pu"], confirm_delay=s["confirm_delay_seconds"],
            nominal_v_dc=self.nominal_v_dc, dc_band=s["dc_band_fraction"],
            battery_enabled=s["battery_enabled"], c_dc=self.c_dc, v_floor=s["v_floor_volts"],
            discharge_current=s["discharge_current_amps"], regulator_tau=s["regulator_tau_seconds"],
            disconnect_band=s["disconnect_band_fraction"], stop_on_collapse=s["stop_on_collapse"],
            resistance_model=s["resistance_model"],
        )

    def with_overrides(self, **simulation) -> "Scenario":
        cfg = copy.deepcopy(self.config)
        cfg["simulation"].update(simulation)
        return Scenario(resolve(cfg))
