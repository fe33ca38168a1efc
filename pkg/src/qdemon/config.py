"""Run configuration: a single JSON document validated against :data:`CONFIG_SCHEMA`.

Units are spelled out in the key names. ``t1_us: null`` disables relaxation
(T1 -> infinity). The ``temperature`` sweep axis takes inverse temperatures 1/T
in 1/K so that infinite (0) and negative temperatures can be swept.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .core import (DEFAULT_BATH_K, DEFAULT_QUBIT_GHZ, DEFAULT_T1_US, InverseTemperature, PhysicalParams,
                   beta_from_occupancy, canonical_occupancy)
from .measurement import FeedbackErrorModel
from .protocol import ConfigurationError, ProtocolTimeline
from .trajectory import DEFAULT_DT

DEFAULT_P_E = 0.097

_num = {"type": "number"}
_prob = {"type": "number", "minimum": 0, "maximum": 1}
_nonneg = {"type": "number", "minimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "qdemon run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "protocol": {"enum": ["A", "B", "a", "b"], "default": "A"},
        "physical": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "qubit_ghz": {"type": "number", "exclusiveMinimum": 0, "default": DEFAULT_QUBIT_GHZ,
                              "description": "omega_q / 2pi in GHz"},
                "t1_us": {"type": ["number", "null"], "exclusiveMinimum": 0, "default": DEFAULT_T1_US,
                          "description": "energy relaxation time; null means no relaxation"},
                "temp_bath_k": {**_nonneg, "default": DEFAULT_BATH_K},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p_e": {**_prob, "description": "excited occupancy prepared before readout x"},
                "beta_eps": {**_num, "description": "beta*hbar*omega_q; alternative to p_e"},
            },
        },
        "errors": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"eps_e_given_g": {**_prob, "default": 0.0}, "eps_g_given_e": {**_prob, "default": 0.0}},
        },
        "timeline": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "readout_width_us": _nonneg, "pulse_width_us": _nonneg, "feedback_delay_us": _nonneg,
                "init_wait_us": _nonneg, "xk_gap_us": _nonneg, "ky_gap_us": _nonneg, "z_wait_us": _nonneg,
                "k_width_us": _nonneg, "y_width_us": _nonneg,
                "feedback_enabled": {"type": "boolean", "default": True},
                "events": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["kind", "start", "duration"],
                        "properties": {"kind": {"type": "string"}, "start": _nonneg, "duration": _nonneg},
                    },
                },
            },
        },
        "dt_us": {"type": "number", "exclusiveMinimum": 0, "default": DEFAULT_DT},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["axis", "grid"],
            "properties": {
                "axis": {"enum": ["temperature", "beta_eps", "eps_fb"],
                         "description": "temperature grid values are 1/T in 1/K"},
                "grid": {"type": "array", "items": _num},
            },
        },
        "n_shots": {"type": "integer", "minimum": 1, "default": 80000},
        "master_seed": {"type": "integer", "minimum": 0, "default": 0},
        "bootstrap": {"type": "integer", "minimum": 0, "default": 1000},
        "beta_source": {"enum": ["configured", "estimated"], "default": "configured"},
        "oracle_mode": {"enum": ["on", "off"], "default": "on"},
        "threads": {"type": "integer", "minimum": 1, "default": 1},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string", "default": "results"}},
        },
    },
}

_TIMELINE_KEYS = {
    "readout_width_us": "readout_width", "pulse_width_us": "pulse_width", "feedback_delay_us": "feedback_delay",
    "init_wait_us": "init_wait", "xk_gap_us": "xk_gap", "ky_gap_us": "ky_gap", "z_wait_us": "z_wait",
    "k_width_us": "k_width", "y_width_us": "y_width",
}


@dataclass(frozen=True)
class SweepPoint:
    param: float
    p_e_init: float
    beta: InverseTemperature
    errors: FeedbackErrorModel


@dataclass
class RunConfig:
    protocol: str = "A"
    params: PhysicalParams = field(default_factory=PhysicalParams)
    p_e_init: float = DEFAULT_P_E
    errors: FeedbackErrorModel = field(default_factory=FeedbackErrorModel)
    timeline: ProtocolTimeline | None = None
    dt: float = DEFAULT_DT
    sweep_axis: str | None = None
    sweep_grid: tuple[float, ...] = ()
    n_shots: int = 80000
    master_seed: int = 0
    bootstrap: int = 1000
    beta_source: str = "configured"
    oracle_mode: str = "on"
    threads: int = 1
    out_dir: str = "results"
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        self.protocol = self.protocol.upper()
        if self.timeline is None:
            self.timeline = ProtocolTimeline.default(self.protocol)
        if self.timeline.protocol != self.protocol:
            raise ConfigurationError(f"timeline is a protocol-{self.timeline.protocol} sequence")

    @property
    def beta(self) -> InverseTemperature:
        return beta_from_occupancy(1.0 - self.p_e_init, self.p_e_init)

    def points(self) -> list[SweepPoint]:
        if not self.sweep_grid:
            raise ConfigurationError("sweep grid is empty")
        pts = []
        for v in self.sweep_grid:
            if self.sweep_axis == "temperature":
                beta = InverseTemperature.from_inverse_temperature(v, self.params.omega_q)
                pts.append(SweepPoint(v, canonical_occupancy(beta)[1], beta, self.errors))
            elif self.sweep_axis == "beta_eps":
                beta = InverseTemperature(v)
                pts.append(SweepPoint(v, canonical_occupancy(beta)[1], beta, self.errors))
            elif self.sweep_axis == "eps_fb":
                if not 0 <= v <= 1:
                    raise ConfigurationError(f"eps_fb grid value {v} outside [0, 1]")
                pts.append(SweepPoint(v, self.p_e_init, self.beta, FeedbackErrorModel.symmetric(v)))
            else:
                raise ConfigurationError(f"unknown sweep axis {self.sweep_axis!r}")
        return pts

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def parse_config(doc: dict) -> RunConfig:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"{path}: {exc.message}") from None
    raw = copy.deepcopy(doc)
    protocol = doc.get("protocol", "A").upper()
    phys = doc.get("physical", {})
    t1 = phys.get("t1_us", DEFAULT_T1_US)
    params = PhysicalParams.from_ghz(phys.get("qubit_ghz", DEFAULT_QUBIT_GHZ), t1,
                                     phys.get("temp_bath_k", DEFAULT_BATH_K))
    init = doc.get("initial", {})
    if "p_e" in init and "beta_eps" in init:
        raise ConfigurationError("initial: give either p_e or beta_eps, not both")
    if "beta_eps" in init:
        p_e = canonical_occupancy(InverseTemperature(init["beta_eps"]))[1]
    else:
        p_e = init.get("p_e", DEFAULT_P_E)
    err = doc.get("errors", {})
    errors = FeedbackErrorModel(err.get("eps_e_given_g", 0.0), err.get("eps_g_given_e", 0.0))

    tl = doc.get("timeline", {})
    if "events" in tl:
        if set(tl) - {"events", "feedback_enabled"}:
            raise ConfigurationError("timeline: explicit events cannot be combined with gap overrides")
        timeline = ProtocolTimeline.from_list(tl["events"])
    else:
        overrides = {_TIMELINE_KEYS[k]: v for k, v in tl.items() if k in _TIMELINE_KEYS}
        if protocol == "A" and set(overrides) & {"xk_gap", "ky_gap", "k_width", "y_width"}:
            raise ConfigurationError("timeline: k/y settings only apply to protocol B")
        timeline = ProtocolTimeline.default(protocol, **overrides)
    if not tl.get("feedback_enabled", True):
        timeline = timeline.without_feedback()

    sweep = doc.get("sweep")
    cfg = RunConfig(
        protocol=protocol, params=params, p_e_init=p_e, errors=errors, timeline=timeline,
        dt=doc.get("dt_us", DEFAULT_DT),
        sweep_axis=sweep["axis"] if sweep else None,
        sweep_grid=tuple(float(v) for v in sweep["grid"]) if sweep else (),
        n_shots=doc.get("n_shots", 80000), master_seed=doc.get("master_seed", 0),
        bootstrap=doc.get("bootstrap", 1000), beta_source=doc.get("beta_source", "configured"),
        oracle_mode=doc.get("oracle_mode", "on"), threads=doc.get("threads", 1),
        out_dir=doc.get("output", {}).get("dir", "results"), raw=raw,
    )
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return parse_config(doc)


def default_document() -> dict:
    """A complete configuration with every default spelled out."""
    return {
        "protocol": "A",
        "physical": {"qubit_ghz": DEFAULT_QUBIT_GHZ, "t1_us": DEFAULT_T1_US, "temp_bath_k": DEFAULT_BATH_K},
        "initial": {"p_e": DEFAULT_P_E},
        "errors": {"eps_e_given_g": 0.0, "eps_g_given_e": 0.0},
        "timeline": {"readout_width_us": 0.5, "pulse_width_us": 0.02, "feedback_delay_us": 0.2,
                     "feedback_enabled": True},
        "dt_us": DEFAULT_DT,
        "sweep": {"axis": "eps_fb", "grid": [round(0.05 * i, 2) for i in range(11)]},
        "n_shots": 80000,
        "master_seed": 0,
        "bootstrap": 1000,
        "beta_source": "configured",
        "oracle_mode": "on",
        "threads": 1,
        "output": {"dir": "results"},
    }


def is_finite_t1(cfg: RunConfig) -> bool:
    return math.isfinite(cfg.params.t1)
