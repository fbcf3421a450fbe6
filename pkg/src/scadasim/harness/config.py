"""Scenario configuration: loading, defaults and validation.

Times marked *scaled* are wall-clock figures divided by
``time_compression`` before they reach the simulator.  Network-level
times (link delays, RTO, processing delays, flood interval, IDS windows)
are used as given.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from ..attack import UseCase
from ..grid import GridError, model_from_dict
from ..ids import RuleKind

SCENARIO_IDS = ("BASELINE", "UC1", "UC2", "UC3", "UC4", "DOS_PAYLOAD_SWEEP", "DOS_INTERVAL_SWEEP")
BUILTIN = {
    "BASELINE": "baseline.yaml",
    "UC1": "uc1.yaml",
    "UC2": "uc2.yaml",
    "UC3": "uc3.yaml",
    "UC4": "uc4.yaml",
    "DOS_PAYLOAD_SWEEP": "dos_payload_sweep.yaml",
    "DOS_INTERVAL_SWEEP": "dos_interval_sweep.yaml",
}

# probabilities a use-case config must state explicitly
REQUIRED_PROBABILITIES = {
    "UC1": ("p",),
    "UC2": ("p", "q"),
    "UC3": ("p", "q", "r"),
    "UC4": ("p", "q", "r"),
}

DEFAULTS = {
    "duration": 300.0,            # scaled
    "time_compression": 10.0,
    "grid": "desk_grid.yaml",
    "grid_step": 1.0,             # scaled
    "topology": None,
    "point_maps": None,
    "metrics_window": 60.0,       # scaled
    "campaign_trials": 200,
    "masters": {
        "count": 1,
        "poll_interval": 30.0,    # scaled
        "poll_phase": "random",
        "command_mode": "direct",
        "command_interval": 30.0,  # scaled; null disables routine commands
        "command_phase": "random",
        "app_timeout": 2.0,
        "select_timeout": 10.0,
        "unsolicited": False,
    },
    "automation": {
        "enabled": True,
        "gen_low_threshold": 100.0,
        "gen_restore_setpoint": 1000.0,
        "trip_on_overload": True,
        "reaction_delay": 30.0,   # scaled
    },
    "network": {
        "rto": 0.2,
        "max_retries": 5,
        "echo_delay": 0.001,
        "log_packets": "all",
        "link": {"bandwidth": 10e6, "propagation_delay": 160e-6, "queue_capacity": 64},
    },
    "ids": {
        "taps": ["sub_router", "ucc_router"],
        "rules": [
            {"id": "icmp-flood", "kind": "IcmpRate", "params": {"window": 1.0, "threshold": 50}},
            {"id": "arp-spoof", "kind": "ArpBindingChange"},
            {"id": "dnp3-operate", "kind": "Dnp3Function", "params": {"functions": [4, 5]}},
            {"id": "dnp3-crc", "kind": "Dnp3CrcMismatch"},
        ],
    },
    "attack": None,
    "dos": None,
    "sweep": None,
}

ATTACK_DEFAULTS = {
    "start": 60.0,                # scaled
    "victims": "all",
    "breakers": [],
    "generators": [],
    "flow_branches": [],
    "fci_processing_delay": 0.120,
    "fdi_processing_delay": 0.170,
    "service_rate": 50.0,
    "recompute_crc": True,
    "false_output": 20.0,
    "false_flow": 3000.0,
    "setpoint_value": None,
    "trip_below": 50.0,
    "reaction_tolerance": 1.0,
    "campaign": {"m": 1, "n": 1, "o": 1},
}

DOS_DEFAULTS = {"target": "sub", "payload_size": 1000, "interval": 0.001, "start": 0.0, "duration": None,
                "jitter": 0.0}

SWEEP_DEFAULTS = {
    "targets": ["sub", "ucc"],
    "seeds": 5,
    "fixed_payload": 1000,
    "fixed_interval": 1000,
    "interval_unit": 1e-6,
    "flood_start": 0.0,           # scaled
    "jitter": 0.0,
}


class ValidationError(ValueError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


@dataclass
class Scenario:
    id: str
    seed: int
    config: dict
    """fully resolved configuration, files inlined; re-loadable as is"""
    source: str | None = None

    def scaled(self, seconds: float | None) -> float | None:
        return None if seconds is None else seconds / self.config["time_compression"]


def data_path(name: str) -> Path:
    return Path(str(resources.files("scadasim.harness").joinpath("data", name)))


def _merge(defaults, given):
    if isinstance(defaults, dict) and isinstance(given, dict):
        out = copy.deepcopy(defaults)
        for k, v in given.items():
            out[k] = _merge(defaults.get(k), v) if k in defaults else copy.deepcopy(v)
        return out
    return copy.deepcopy(given)


def _load_yaml(path: Path, field: str):
    try:
        with open(path) as fh:
            return yaml.safe_load(fh)
    except FileNotFoundError:
        raise ValidationError(field, f"file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ValidationError(field, f"not valid YAML: {exc}") from None


def _resolve_file(value, base: Path | None, field: str):
    """Inline a referenced document: config-relative path first, then the built-in data directory."""
    if value is None or isinstance(value, (dict, list)):
        return value
    if not isinstance(value, str):
        raise ValidationError(field, "expected a file name or an inline document")
    candidates = []
    if base is not None:
        candidates.append(base / value)
    candidates.append(Path(value))
    candidates.append(data_path(value))
    for cand in candidates:
        if cand.is_file():
            return _load_yaml(cand, field)
    raise ValidationError(field, f"file not found: {value}")


def _number(cfg: dict, key: str, path: str, positive: bool = True, allow_none: bool = False,
            minimum: float | None = None):
    val = cfg.get(key)
    if val is None and allow_none:
        return
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ValidationError(f"{path}.{key}" if path else key, "expected a number")
    if positive and not val > 0:
        raise ValidationError(f"{path}.{key}" if path else key, "must be positive")
    if minimum is not None and val < minimum:
        raise ValidationError(f"{path}.{key}" if path else key, f"must be at least {minimum}")


def resolve(doc: dict, base: Path | None = None, source: str | None = None) -> Scenario:
    """Validate a raw config document and return the resolved scenario."""
    if not isinstance(doc, dict):
        raise ValidationError("<root>", "config must be a mapping")
    sid = doc.get("id")
    if sid not in SCENARIO_IDS:
        raise ValidationError("id", f"expected one of {', '.join(SCENARIO_IDS)}")
    if "seed" not in doc:
        raise ValidationError("seed", "a seed is mandatory")
    seed = doc["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ValidationError("seed", "expected an unsigned 64-bit integer")
    unknown = set(doc) - set(DEFAULTS) - {"id", "seed", "description"}
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown key")

    cfg = _merge(DEFAULTS, {k: v for k, v in doc.items() if k not in ("attack", "dos", "sweep")})
    cfg["id"] = sid
    cfg["seed"] = seed
    for key in ("duration", "time_compression", "grid_step", "metrics_window"):
        _number(cfg, key, "")
    _number(cfg, "campaign_trials", "", minimum=1)

    cfg["grid"] = _resolve_file(cfg["grid"], base, "grid")
    try:
        model = model_from_dict(cfg["grid"])
    except (GridError, TypeError, AttributeError) as exc:
        raise ValidationError("grid", str(exc)) from None
    cfg["topology"] = _resolve_file(cfg["topology"], base, "topology")
    cfg["point_maps"] = _resolve_file(cfg["point_maps"], base, "point_maps")

    m = cfg["masters"]
    if not isinstance(m.get("count"), int) or m["count"] not in (1, 5, 10):
        raise ValidationError("masters.count", "expected 1, 5 or 10")
    _number(m, "poll_interval", "masters")
    _number(m, "command_interval", "masters", allow_none=True)
    _number(m, "app_timeout", "masters")
    _number(m, "select_timeout", "masters")
    if m["command_mode"] not in ("direct", "select_operate"):
        raise ValidationError("masters.command_mode", "expected direct or select_operate")
    for key in ("poll_phase", "command_phase"):
        if m[key] != "random":
            _number(m, key, "masters", positive=False, minimum=0)

    a = cfg["automation"]
    for key in ("gen_low_threshold", "gen_restore_setpoint"):
        _number(a, key, "automation")
    _number(a, "reaction_delay", "automation", positive=False, minimum=0)

    n = cfg["network"]
    _number(n, "rto", "network")
    _number(n, "max_retries", "network", positive=False, minimum=0)
    _number(n, "echo_delay", "network", positive=False, minimum=0)
    if n["log_packets"] not in ("all", "dnp3", "none"):
        raise ValidationError("network.log_packets", "expected all, dnp3 or none")
    for key in ("bandwidth", "queue_capacity"):
        _number(n["link"], key, "network.link")
    _number(n["link"], "propagation_delay", "network.link", positive=False, minimum=0)

    rules = cfg["ids"]["rules"]
    if not isinstance(rules, list):
        raise ValidationError("ids.rules", "expected a list")
    for i, rule in enumerate(rules):
        if not isinstance(rule, dict) or "id" not in rule:
            raise ValidationError(f"ids.rules[{i}]", "rule needs an id")
        try:
            RuleKind(rule.get("kind"))
        except ValueError:
            raise ValidationError(f"ids.rules[{i}].kind", "unknown rule kind") from None

    cfg["attack"] = _resolve_attack(doc.get("attack"), sid, model)
    cfg["dos"] = _resolve_dos(doc.get("dos"))
    cfg["sweep"] = _resolve_sweep(doc.get("sweep"), sid)
    return Scenario(sid, seed, cfg, source)


def _resolve_attack(raw, sid: str, model) -> dict | None:
    if sid not in REQUIRED_PROBABILITIES:
        if raw is not None:
            raise ValidationError("attack", f"{sid} scenarios take no MiTM attack")
        return None
    if raw is None:
        raise ValidationError("attack", f"{sid} requires an attack section")
    if not isinstance(raw, dict):
        raise ValidationError("attack", "expected a mapping")
    att = _merge(ATTACK_DEFAULTS, raw)
    att["use_case"] = att.get("use_case", sid)
    try:
        UseCase(att["use_case"])
    except ValueError:
        raise ValidationError("attack.use_case", "expected UC1..UC4") from None
    if att["use_case"] != sid:
        raise ValidationError("attack.use_case", f"does not match scenario id {sid}")
    for name in REQUIRED_PROBABILITIES[sid]:
        if raw.get(name) is None:
            raise ValidationError(f"attack.{name}", f"{sid} requires the {name} success probability")
    for name in ("p", "q", "r"):
        val = att.get(name)
        if val is None:
            att[name] = None
            continue
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not 0 <= val <= 1:
            raise ValidationError(f"attack.{name}", "must be a probability in [0, 1]")
    _number(att, "start", "attack", positive=False, minimum=0)
    _number(att, "service_rate", "attack")
    _number(att, "fci_processing_delay", "attack", positive=False, minimum=0)
    _number(att, "fdi_processing_delay", "attack", positive=False, minimum=0)
    if att["fdi_processing_delay"] < att["fci_processing_delay"]:
        raise ValidationError("attack.fdi_processing_delay", "must not be shorter than fci_processing_delay")
    branches = {b.id for b in model.branches}
    gens = {g.id for g in model.generators}
    for key, pool in (("breakers", branches), ("flow_branches", branches), ("generators", gens)):
        if not isinstance(att[key], list):
            raise ValidationError(f"attack.{key}", "expected a list")
        for i, dev in enumerate(att[key]):
            if dev not in pool:
                raise ValidationError(f"attack.{key}[{i}]", f"unknown device {dev}")
    if sid in ("UC1", "UC2", "UC4") and not att["breakers"]:
        raise ValidationError("attack.breakers", f"{sid} needs at least one targeted breaker")
    if sid in ("UC2", "UC3", "UC4") and not att["generators"]:
        raise ValidationError("attack.generators", f"{sid} needs targeted generators")
    camp = att["campaign"]
    for key in ("m", "n", "o"):
        if not isinstance(camp.get(key), int) or camp[key] < 0:
            raise ValidationError(f"attack.campaign.{key}", "expected a non-negative integer")
    return att


def _resolve_dos(raw) -> dict | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ValidationError("dos", "expected a mapping")
    dos = _merge(DOS_DEFAULTS, raw)
    if dos["target"] not in ("sub", "ucc"):
        raise ValidationError("dos.target", "expected sub or ucc")
    _number(dos, "payload_size", "dos", minimum=1)
    _number(dos, "interval", "dos")
    _number(dos, "start", "dos", positive=False, minimum=0)
    _number(dos, "duration", "dos", positive=False, minimum=0, allow_none=True)
    _number(dos, "jitter", "dos", positive=False, minimum=0)
    if dos["jitter"] >= 1:
        raise ValidationError("dos.jitter", "must be below 1")
    return dos


def _expand(values, field: str) -> list:
    if isinstance(values, list):
        if not values:
            raise ValidationError(field, "empty value list")
        return values
    if isinstance(values, dict):
        try:
            start, stop, stepv = values["start"], values["stop"], values["step"]
        except KeyError as exc:
            raise ValidationError(f"{field}.{exc.args[0]}", "missing") from None
        if stepv == 0 or (stop - start) * stepv < 0:
            raise ValidationError(f"{field}.step", "does not move from start towards stop")
        count = int(round((stop - start) / stepv)) + 1
        return [start + i * stepv for i in range(count)]
    raise ValidationError(field, "expected a list or start/stop/step")


def _resolve_sweep(raw, sid: str) -> dict | None:
    if not sid.startswith("DOS_"):
        if raw is not None:
            raise ValidationError("sweep", f"{sid} is not a sweep scenario")
        return None
    if raw is None:
        raise ValidationError("sweep", f"{sid} requires a sweep section")
    sw = _merge(SWEEP_DEFAULTS, raw)
    sw["kind"] = "payload" if sid == "DOS_PAYLOAD_SWEEP" else "interval"
    if "values" not in raw:
        raise ValidationError("sweep.values", "missing")
    sw["values"] = _expand(raw["values"], "sweep.values")
    for i, v in enumerate(sw["values"]):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise ValidationError(f"sweep.values[{i}]", "must be a positive number")
    if not isinstance(sw["targets"], list) or not sw["targets"] or \
            any(t not in ("sub", "ucc") for t in sw["targets"]):
        raise ValidationError("sweep.targets", "expected a non-empty list of sub/ucc")
    if not isinstance(sw["seeds"], int) or sw["seeds"] < 1:
        raise ValidationError("sweep.seeds", "expected a positive integer")
    for key in ("fixed_payload", "fixed_interval", "interval_unit"):
        _number(sw, key, "sweep")
    _number(sw, "flood_start", "sweep", positive=False, minimum=0)
    _number(sw, "jitter", "sweep", positive=False, minimum=0)
    if sw["jitter"] >= 1:
        raise ValidationError("sweep.jitter", "must be below 1")
    return sw


def load_config(path) -> Scenario:
    path = Path(path)
    doc = _load_yaml(path, "<config>")
    return resolve(doc, path.parent, str(path))


def builtin_scenario(sid: str, **overrides) -> Scenario:
    """One of the shipped scenarios, with top-level keys optionally overridden."""
    if sid not in BUILTIN:
        raise ValidationError("scenario", f"unknown built-in scenario {sid}")
    doc = _load_yaml(data_path(BUILTIN[sid]), "scenario")
    doc = _merge(doc, overrides)
    return resolve(doc, data_path(""), BUILTIN[sid])


def scenario_from(ref: str) -> Scenario:
    """A built-in id (``UC2``) or a config path."""
    if ref.upper() in BUILTIN and not Path(ref).is_file():
        return builtin_scenario(ref.upper())
    return load_config(ref)
