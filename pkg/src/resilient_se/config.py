"""Scenario configuration: dataclasses, file format and key=value overrides.

Scenario files use the same sectioned dialect as grid files::

    [scenario]
    duration = 400
    dt = 0.001
    record_every = 100

    [load_events]
    bus  delta  t_on  t_off
    3    0.1    20    200

    [attack]
    t_start = 50

    [attack_signals]
    sensor  kind      amplitude  frequency
    P:load  sinusoid  0.05       0.5

    [estimator]
    mode = auto
    margin = 0.1

Sensor selectors in ``[attack_signals]`` are labels (``w3``, ``P13``),
integer row indices, or group selectors ``w:gen``, ``w:load``, ``P:gen``,
``P:load``, ``w:*``, ``P:*``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import textfmt
from .attack import AttackScenario, AttackSignal
from .errors import ConfigInvalid, ParseError, UnknownBus

ESTIMATOR_MODES = ("none", "standard", "resilient", "auto")
GROUP_SELECTORS = ("w:gen", "w:load", "P:gen", "P:load", "w:*", "P:*")


@dataclass(frozen=True)
class LoadEvent:
    bus: int
    delta: float
    t_on: float
    t_off: float = math.inf

    def __post_init__(self):
        if not (math.isfinite(self.delta) and math.isfinite(self.t_on)):
            raise ConfigInvalid(f"load event at bus {self.bus}: delta and t_on must be finite")
        if not self.t_on < self.t_off:
            raise ConfigInvalid(f"load event at bus {self.bus}: t_on must precede t_off")


@dataclass(frozen=True)
class AttackConfig:
    """Attack declared against sensor selectors; resolved once sensors are known."""

    signals: tuple = ()  # (selector, AttackSignal) pairs
    t_start: float = 0.0
    t_end: float = math.inf

    def resolve(self, labels, bus_kinds=None):
        """Expand selectors into an ``AttackScenario`` over ``labels``."""
        labels = list(labels)
        pos = {lab: i for i, lab in enumerate(labels)}
        out = {}
        for sel, sig in self.signals:
            for i in _select(str(sel), labels, pos, bus_kinds):
                out[i] = sig  # later rows override earlier ones
        return AttackScenario(out, self.t_start, self.t_end, m=len(labels))


def _select(sel, labels, pos, bus_kinds):
    if sel in pos:
        return [pos[sel]]
    if sel.lstrip("-").isdigit():
        i = int(sel)
        if not 0 <= i < len(labels):
            raise ConfigInvalid(f"attacked index {i} outside 0..{len(labels) - 1}")
        return [i]
    if sel in GROUP_SELECTORS:
        prefix, kind = sel.split(":")
        if kind != "*" and bus_kinds is None:
            raise ConfigInvalid(f"selector {sel!r} needs bus kinds")
        hits = []
        for i, lab in enumerate(labels):
            if not lab.startswith(prefix):
                continue
            if kind == "*" or bus_kinds.get(int(lab[1:])) == ("generator" if kind == "gen" else "load"):
                hits.append(i)
        return hits
    raise UnknownBus(f"attack selector {sel!r} matches no sensor")


@dataclass(frozen=True)
class EstimatorConfig:
    mode: str = "auto"
    theta: float = None  # fixed clustering threshold
    target_K: int = None  # cluster count (takes precedence over theta)
    margin: float = 0.1
    tol: float = 1e-9  # PBH numerical-rank tolerance
    xhat0: tuple = None  # initial estimate; None means zero
    allow_unobservable_zero_mode: bool = False
    disturbance_feedforward: bool = False

    def __post_init__(self):
        if self.mode not in ESTIMATOR_MODES:
            raise ConfigInvalid(f"estimator mode must be one of {ESTIMATOR_MODES}, got {self.mode!r}")
        if self.theta is not None and not self.theta >= 0:
            raise ConfigInvalid(f"theta must be >= 0, got {self.theta}")
        if self.target_K is not None and self.target_K < 1:
            raise ConfigInvalid(f"target_K must be >= 1, got {self.target_K}")
        if not (math.isfinite(self.margin) and self.margin >= 0):
            raise ConfigInvalid(f"margin must be finite and >= 0, got {self.margin}")
        if not self.tol > 0:
            raise ConfigInvalid(f"tol must be > 0, got {self.tol}")


@dataclass(frozen=True)
class Scenario:
    duration: float
    dt: float = 1e-3
    x0: tuple = None
    load_events: tuple = ()
    attack: AttackConfig = None
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    record_every: int = 1
    metrics_start: float = 0.0  # start of the post-transient window for state metrics
    sensors: tuple = None  # sensor labels; None means the grid's default set
    name: str = "scenario"

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigInvalid(f"dt must be finite and > 0, got {self.dt}")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ConfigInvalid(f"duration must be finite and > 0, got {self.duration}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ConfigInvalid(f"record_every must be a positive integer, got {self.record_every}")
        if not 0 <= self.metrics_start <= self.duration:
            raise ConfigInvalid("metrics_start must lie in [0, duration]")
        for ev in self.load_events:
            if ev.t_on < 0 or ev.t_on > self.duration:
                raise ConfigInvalid(f"load event at bus {ev.bus}: t_on={ev.t_on} outside [0, {self.duration}]")
        if self.attack is not None and self.attack.t_start > self.duration:
            raise ConfigInvalid("attack starts after the end of the run")

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))


# -- file format --------------------------------------------------------------

_SCENARIO_KEYS = {"name", "duration", "dt", "record_every", "metrics_start", "x0"}
_ATTACK_KEYS = {"t_start", "t_end"}
_ESTIMATOR_KEYS = {"mode", "theta", "target_K", "margin", "tol", "xhat0", "allow_unobservable_zero_mode",
                   "disturbance_feedforward"}
_SIGNAL_COLS = ("sensor", "kind")
_SIGNAL_OPT = ("amplitude", "slope", "frequency", "phase")


def _bool(tok, lineno, what, path):
    t = tok.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ParseError(f"{what}: expected a boolean, got {tok!r}", lineno, path)


def _vector(tok, lineno, what, path):
    return tuple(textfmt.to_float(v, lineno, what, path) for v in tok.replace(",", " ").split())


def _optional_number(tok, lineno, what, path, conv):
    if tok.strip().lower() in ("none", ""):
        return None
    return conv(tok, lineno, what, path)


def parse_scenario_text(text, path=None):
    sections = textfmt.read_sections(text, path)
    known = {"scenario", "load_events", "attack", "attack_signals", "estimator", "sensors"}
    for name, sec in sections.items():
        if name not in known:
            raise ParseError(f"unknown section [{name}]; expected one of {sorted(known)}", sec.line, path)
    if "scenario" not in sections:
        raise ParseError("missing [scenario] section", None, path)

    kv = textfmt.key_values(sections["scenario"], path, _SCENARIO_KEYS)
    if "duration" not in kv:
        raise ParseError("[scenario] needs 'duration'", sections["scenario"].line, path)
    args = {}
    for key, (ln, val) in kv.items():
        if key == "name":
            args["name"] = val
        elif key == "record_every":
            args[key] = textfmt.to_int(val, ln, key, path)
        elif key == "x0":
            args[key] = _vector(val, ln, key, path)
        else:
            args[key] = textfmt.to_float(val, ln, key, path)

    events = []
    if "load_events" in sections:
        for ln, row in textfmt.table(sections["load_events"], ("bus", "delta", "t_on"), ("t_off",), path):
            t_off = textfmt.to_float(row.get("t_off", "inf"), ln, "t_off", path)
            events.append(_checked(ln, path, LoadEvent, textfmt.to_int(row["bus"], ln, "bus", path),
                                   textfmt.to_float(row["delta"], ln, "delta", path),
                                   textfmt.to_float(row["t_on"], ln, "t_on", path), t_off))
    args["load_events"] = tuple(events)

    if "sensors" in sections:
        labels = []
        for ln, line in sections["sensors"].lines:
            labels.extend(line.replace(",", " ").split())
        args["sensors"] = tuple(labels)

    if "attack_signals" in sections:
        window = {}
        if "attack" in sections:
            for key, (ln, val) in textfmt.key_values(sections["attack"], path, _ATTACK_KEYS).items():
                window[key] = textfmt.to_float(val, ln, key, path)
        signals = []
        for ln, row in textfmt.table(sections["attack_signals"], _SIGNAL_COLS, _SIGNAL_OPT, path):
            params = {k: textfmt.to_float(row[k], ln, k, path) for k in _SIGNAL_OPT if k in row}
            signals.append((row["sensor"], _checked(ln, path, AttackSignal, row["kind"], **params)))
        args["attack"] = _checked(sections["attack_signals"].line, path, AttackConfig, tuple(signals), **window)
    elif "attack" in sections:
        raise ParseError("[attack] given without [attack_signals]", sections["attack"].line, path)

    if "estimator" in sections:
        est = {}
        for key, (ln, val) in textfmt.key_values(sections["estimator"], path, _ESTIMATOR_KEYS).items():
            if key == "mode":
                est[key] = val
            elif key == "target_K":
                est[key] = _optional_number(val, ln, key, path, textfmt.to_int)
            elif key == "theta":
                est[key] = _optional_number(val, ln, key, path, textfmt.to_float)
            elif key == "xhat0":
                est[key] = _vector(val, ln, key, path)
            elif key in ("allow_unobservable_zero_mode", "disturbance_feedforward"):
                est[key] = _bool(val, ln, key, path)
            else:
                est[key] = textfmt.to_float(val, ln, key, path)
        args["estimator"] = _checked(sections["estimator"].line, path, EstimatorConfig, **est)

    return _checked(sections["scenario"].line, path, Scenario, **args)


def _checked(lineno, path, cls, *args, **kwargs):
    """Construct ``cls``, attaching file position to validation failures."""
    try:
        return cls(*args, **kwargs)
    except ConfigInvalid as exc:
        raise ParseError(str(exc), lineno, path) from None


def parse_scenario_file(path):
    p = resolve_scenario_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file: {exc.strerror}", None, p) from None
    return parse_scenario_text(text, p)


DATA_DIR = Path(__file__).parent / "data"


def resolve_scenario_path(path):
    p = Path(path)
    if not p.exists() and (DATA_DIR / p.name).exists() and p.parent == Path("."):
        return DATA_DIR / p.name
    return p


def _num(v):
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_scenario(sc):
    parts = []
    items = [("name", sc.name), ("duration", float(sc.duration)), ("dt", float(sc.dt)),
             ("record_every", int(sc.record_every)), ("metrics_start", float(sc.metrics_start))]
    if sc.x0 is not None:
        items.append(("x0", " ".join(repr(float(v)) for v in sc.x0)))
    parts.append(textfmt.write_key_values("scenario", items))
    if sc.load_events:
        parts.append(textfmt.write_table("load_events", ("bus", "delta", "t_on", "t_off"),
                                         [(e.bus, float(e.delta), float(e.t_on), float(e.t_off))
                                          for e in sc.load_events]))
    if sc.sensors is not None:
        parts.append("[sensors]\n" + " ".join(sc.sensors) + "\n")
    if sc.attack is not None:
        parts.append(textfmt.write_key_values("attack", [("t_start", float(sc.attack.t_start)),
                                                         ("t_end", float(sc.attack.t_end))]))
        parts.append(textfmt.write_table(
            "attack_signals", _SIGNAL_COLS + _SIGNAL_OPT,
            [(str(sel), s.kind, float(s.amplitude), float(s.slope), float(s.frequency), float(s.phase))
             for sel, s in sc.attack.signals]))
    e = sc.estimator
    items = [("mode", e.mode), ("theta", _num(e.theta)), ("target_K", _num(e.target_K)),
             ("margin", float(e.margin)), ("tol", float(e.tol)),
             ("allow_unobservable_zero_mode", str(e.allow_unobservable_zero_mode).lower()),
             ("disturbance_feedforward", str(e.disturbance_feedforward).lower())]
    if e.xhat0 is not None:
        items.append(("xhat0", " ".join(repr(float(v)) for v in e.xhat0)))
    parts.append(textfmt.write_key_values("estimator", items))
    return "\n".join(parts)


# -- overrides ----------------------------------------------------------------

# key -> (converter, target) where target is "scenario" or "estimator"
OVERRIDE_SCHEMA = {
    "theta": (float, "estimator"),
    "target_K": (int, "estimator"),
    "margin": (float, "estimator"),
    "tol": (float, "estimator"),
    "mode": (str, "estimator"),
    "dt": (float, "scenario"),
    "duration": (float, "scenario"),
    "record_every": (int, "scenario"),
    "metrics_start": (float, "scenario"),
    "sensors": (lambda s: tuple(s.replace(",", " ").split()), "scenario"),
}


def parse_overrides(pairs):
    """``["theta=0.1", "target_K=21"]`` -> typed dict, checked against ``OVERRIDE_SCHEMA``."""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigInvalid(f"override {pair!r} is not of the form key=value")
        key, val = (s.strip() for s in pair.split("=", 1))
        if key not in OVERRIDE_SCHEMA:
            raise ConfigInvalid(f"unknown override {key!r}; allowed: {sorted(OVERRIDE_SCHEMA)}")
        conv, _ = OVERRIDE_SCHEMA[key]
        try:
            out[key] = None if val.lower() == "none" and key in ("theta", "target_K") else conv(val)
        except ValueError:
            raise ConfigInvalid(f"override {key}={val!r} has the wrong type") from None
    return out


def apply_overrides(sc, overrides):
    sc_kw, est_kw = {}, {}
    for key, val in overrides.items():
        (est_kw if OVERRIDE_SCHEMA[key][1] == "estimator" else sc_kw)[key] = val
    if est_kw:
        sc_kw["estimator"] = dataclasses.replace(sc.estimator, **est_kw)
    return dataclasses.replace(sc, **sc_kw) if sc_kw else sc


def x_vector(values, n, what):
    if values is None:
        return np.zeros(n)
    v = np.asarray(values, float)
    if v.size == 1:
        return np.full(n, float(v[0]))
    if v.shape != (n,):
        raise ConfigInvalid(f"{what} has {v.size} entries, the model has {n} states")
    return v.copy()
